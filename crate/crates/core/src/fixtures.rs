//! Fixture classes built with [`crate::asm`], shaped like javac output.
//!
//! Used by tests, the acceptance run, the benches and the `write_fixtures`
//! example.

use crate::asm::{op_flags as f, ClassAssembler, VType};
use crate::classfile::{self, opcodes as op, ClassFileError, MethodDescriptor};
use crate::goals::{serialize_goals, CoverageGoal};

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub bytes: Vec<u8>,
}

/// A static method the interpreter can run with generated arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Target {
    pub class: &'static str,
    pub method: &'static str,
    pub descriptor: &'static str,
}

impl Target {
    pub fn params(&self) -> MethodDescriptor {
        MethodDescriptor::parse(self.descriptor).expect("fixture descriptors are valid")
    }
}

const PS: u16 = f::PUBLIC | f::STATIC;

/// `sign(float)`: 0 near zero, -1 negative, 1 positive, -2 for NaN.
pub fn float_tools() -> Vec<u8> {
    let mut a = ClassAssembler::new("FloatTools", "java/lang/Object");
    a.source_file("FloatTools.java");
    a.default_constructor();
    a.method(PS, "sign", "(F)I", |c| {
        c.max(4, 1);
        let (l1, l2, l3) = (c.label(), c.label(), c.label());
        c.line(5);
        c.op(op::FLOAD_0);
        c.invokestatic("java/lang/Math", "abs", "(F)F");
        c.op(op::F2D);
        c.ldc2_double(1e-6);
        c.op(op::DCMPG);
        c.jump(op::IFGE, l1);
        c.line(6);
        c.ops(&[op::ICONST_0, op::IRETURN]);
        c.bind(l1);
        c.frame_same();
        c.line(7);
        c.ops(&[op::FLOAD_0, op::FCONST_0, op::FCMPG]);
        c.jump(op::IFGE, l2);
        c.line(8);
        c.ops(&[op::ICONST_M1, op::IRETURN]);
        c.bind(l2);
        c.frame_same();
        c.line(9);
        c.ops(&[op::FLOAD_0, op::FCONST_0, op::FCMPL]);
        c.jump(op::IFLE, l3);
        c.line(10);
        c.ops(&[op::ICONST_1, op::IRETURN]);
        c.bind(l3);
        c.frame_same();
        c.line(11);
        c.bipush(-2);
        c.op(op::IRETURN);
    });
    a.finish()
}

/// (bytecodeIndex, line) of the nine goals of `FloatTools.sign`.
pub const FLOAT_TOOLS_SITES: [(usize, u32); 9] =
    [(1, 5), (5, 5), (8, 7), (7, 6), (11, 7), (13, 8), (17, 9), (19, 10), (21, 11)];

pub fn float_tools_goals() -> Vec<CoverageGoal> {
    FLOAT_TOOLS_SITES
        .iter()
        .enumerate()
        .map(|(i, &(index, line))| CoverageGoal {
            name: format!("FloatTools.sign:(F)I.coverage.{}", i + 1),
            description: format!("block {} (lines FloatTools.java:{line})", i + 2),
            covered_lines: line.to_string(),
            file: "FloatTools.java".into(),
            function: "FloatTools.sign:(F)I".into(),
            line,
            bytecode_index: index,
        })
        .collect()
}

pub fn float_tools_goals_json() -> String {
    serialize_goals(&float_tools_goals())
}

/// The three-test suite, plus the NaN test when `with_nan` is set.
pub fn float_tools_suite_json(with_nan: bool) -> String {
    let case = |id: &str, arg: &str, expect: i32| {
        format!(
            r#"{{"id":"{id}","class":"FloatTools","method":"sign","descriptor":"(F)I","args":[{{"kind":"float","value":{arg}}}],"expect":{{"kind":"int","value":{expect}}}}}"#
        )
    };
    let mut cases = vec![case("zero", "-1e-10", 0), case("negative", "-10.0", -1), case("positive", "1234.0", 1)];
    if with_nan {
        cases.push(case("nan", "\"NaN\"", -2));
    }
    format!("[\n  {}\n]\n", cases.join(",\n  "))
}

/// Static counters set up by `<clinit>`.
pub fn clinit_holder() -> Vec<u8> {
    let mut a = ClassAssembler::new("ClinitHolder", "java/lang/Object");
    a.source_file("ClinitHolder.java");
    for name in ["base", "calls", "inits"] {
        a.field(f::PRIVATE | f::STATIC, name, "I");
    }
    a.default_constructor();
    a.method(PS, "next", "(I)I", |c| {
        c.max(2, 1);
        c.line(8);
        c.field_op(op::GETSTATIC, "ClinitHolder", "calls", "I");
        c.op(op::ICONST_1);
        c.op(op::IADD);
        c.field_op(op::PUTSTATIC, "ClinitHolder", "calls", "I");
        c.line(9);
        c.op(op::ILOAD_0);
        c.field_op(op::GETSTATIC, "ClinitHolder", "base", "I");
        c.op(op::IADD);
        c.op(op::IRETURN);
    });
    for name in ["calls", "inits"] {
        a.method(PS, name, "()I", |c| {
            c.max(1, 0);
            c.field_op(op::GETSTATIC, "ClinitHolder", name, "I");
            c.op(op::IRETURN);
        });
    }
    a.method(f::STATIC, "<clinit>", "()V", |c| {
        c.max(2, 0);
        c.line(3);
        c.bipush(42);
        c.field_op(op::PUTSTATIC, "ClinitHolder", "base", "I");
        c.line(4);
        c.field_op(op::GETSTATIC, "ClinitHolder", "inits", "I");
        c.op(op::ICONST_1);
        c.op(op::IADD);
        c.field_op(op::PUTSTATIC, "ClinitHolder", "inits", "I");
        c.op(op::RETURN);
    });
    a.finish()
}

pub fn try_catch() -> Vec<u8> {
    let mut a = ClassAssembler::new("TryCatch", "java/lang/Object");
    a.source_file("TryCatch.java");
    a.default_constructor();
    a.method(PS, "safeDiv", "(II)I", |c| {
        c.max(2, 3);
        let (start, end, handler) = (c.label(), c.label(), c.label());
        c.bind(start);
        c.line(4);
        c.ops(&[op::ILOAD_0, op::ILOAD_1, op::IDIV, op::IRETURN]);
        c.bind(end);
        c.bind(handler);
        c.frame_same1(VType::object("java/lang/ArithmeticException"));
        c.line(5);
        c.ops(&[op::ASTORE_2, op::ICONST_0, op::IRETURN]);
        c.handler(start, end, handler, Some("java/lang/ArithmeticException"));
    });
    a.method(PS, "guarded", "(I)I", |c| {
        c.max(2, 1);
        let (start, ok, end, handler) = (c.label(), c.label(), c.label(), c.label());
        c.bind(start);
        c.line(10);
        c.op(op::ILOAD_0);
        c.jump(op::IFGE, ok);
        c.line(11);
        c.class_op(op::NEW, "java/lang/IllegalStateException");
        c.op(op::DUP);
        c.invokespecial("java/lang/IllegalStateException", "<init>", "()V");
        c.op(op::ATHROW);
        c.bind(ok);
        c.frame_same();
        c.line(12);
        c.ops(&[op::ILOAD_0, op::ICONST_2, op::IMUL, op::IRETURN]);
        c.bind(end);
        c.bind(handler);
        c.frame_same1(VType::object("java/lang/Throwable"));
        c.line(13);
        c.ops(&[op::POP, op::ICONST_M1, op::IRETURN]);
        c.handler(start, end, handler, None);
    });
    a.finish()
}

/// More than 255 pool entries, so new constants need `ldc_w`.
pub fn big_pool() -> Vec<u8> {
    let mut a = ClassAssembler::new("BigPool", "java/lang/Object");
    a.source_file("BigPool.java");
    a.default_constructor();
    a.pad_pool(300);
    a.method(PS, "pick", "(I)I", |c| {
        c.max(1, 1);
        let neg = c.label();
        c.line(3);
        c.op(op::ILOAD_0);
        c.jump(op::IFLE, neg);
        c.ldc_int(100_000);
        c.op(op::IRETURN);
        c.bind(neg);
        c.frame_same();
        c.line(4);
        c.ldc_int(-77_777);
        c.op(op::IRETURN);
    });
    a.finish()
}

/// `sumTo(n)`: 0 + 1 + ... + (n & 255).
pub fn loops() -> Vec<u8> {
    let mut a = ClassAssembler::new("Loops", "java/lang/Object");
    a.source_file("Loops.java");
    a.default_constructor();
    a.method(PS, "sumTo", "(I)I", |c| {
        c.max(2, 3);
        let (top, done) = (c.label(), c.label());
        c.line(3);
        c.op(op::ILOAD_0);
        c.sipush(255);
        c.ops(&[op::IAND, op::ISTORE_0]);
        c.line(4);
        c.ops(&[op::ICONST_0, op::ISTORE_1, op::ICONST_0, op::ISTORE_2]);
        c.bind(top);
        c.frame_append(&[VType::Int, VType::Int]);
        c.ops(&[op::ILOAD_2, op::ILOAD_0]);
        c.jump(op::IF_ICMPGT, done);
        c.line(5);
        c.ops(&[op::ILOAD_1, op::ILOAD_2, op::IADD, op::ISTORE_1]);
        c.iinc(2, 1);
        c.jump(op::GOTO, top);
        c.bind(done);
        c.frame_chop(1);
        c.line(6);
        c.ops(&[op::ILOAD_1, op::IRETURN]);
    });
    a.finish()
}

pub fn switches() -> Vec<u8> {
    let mut a = ClassAssembler::new("Switches", "java/lang/Object");
    a.source_file("Switches.java");
    a.default_constructor();
    a.method(PS, "dense", "(I)I", |c| {
        c.max(1, 1);
        let def = c.label();
        let arms: Vec<_> = (0..4).map(|_| c.label()).collect();
        c.line(3);
        c.op(op::ILOAD_0);
        c.tableswitch(0, def, &arms);
        for (i, arm) in arms.iter().enumerate() {
            c.bind(*arm);
            c.frame_same();
            c.bipush(10 * (i as i8 + 1));
            c.op(op::IRETURN);
        }
        c.bind(def);
        c.frame_same();
        c.ops(&[op::ICONST_M1, op::IRETURN]);
    });
    a.method(PS, "sparse", "(I)I", |c| {
        c.max(2, 1);
        let def = c.label();
        let arms: Vec<_> = (0..3).map(|_| c.label()).collect();
        c.line(10);
        c.ops(&[op::ILOAD_0, op::ICONST_1, op::IADD]);
        c.lookupswitch(def, &[(-5, arms[0]), (10, arms[1]), (1000, arms[2])]);
        for (i, arm) in arms.iter().enumerate() {
            c.bind(*arm);
            c.frame_same();
            c.sipush(500 + i as i16);
            c.op(op::IRETURN);
        }
        c.bind(def);
        c.frame_same();
        c.ops(&[op::ICONST_M1, op::IRETURN]);
    });
    a.finish()
}

pub fn floats() -> Vec<u8> {
    let mut a = ClassAssembler::new("Floats", "java/lang/Object");
    a.source_file("Floats.java");
    a.default_constructor();
    a.method(PS, "clamp", "(FFF)F", |c| {
        c.max(2, 3);
        let (l1, l2) = (c.label(), c.label());
        c.ops(&[op::FLOAD_0, op::FLOAD_1, op::FCMPG]);
        c.jump(op::IFGE, l1);
        c.ops(&[op::FLOAD_1, op::FRETURN]);
        c.bind(l1);
        c.frame_same();
        c.ops(&[op::FLOAD_0, op::FLOAD_2, op::FCMPL]);
        c.jump(op::IFLE, l2);
        c.ops(&[op::FLOAD_2, op::FRETURN]);
        c.bind(l2);
        c.frame_same();
        c.ops(&[op::FLOAD_0, op::FRETURN]);
    });
    a.method(PS, "lerp", "(FFF)F", |c| {
        c.max(3, 3);
        c.ops(&[op::FLOAD_0, op::FLOAD_1, op::FLOAD_0, op::FSUB, op::FLOAD_2, op::FMUL, op::FADD, op::FRETURN]);
    });
    a.method(PS, "scale", "(F)F", |c| {
        c.max(2, 1);
        c.op(op::FLOAD_0);
        c.ldc_float(2.5);
        c.ops(&[op::FMUL, op::FNEG]);
        c.ldc_float(3.0);
        c.ops(&[op::FDIV, op::FRETURN]);
    });
    a.method(PS, "toDouble", "(F)D", |c| {
        c.max(4, 1);
        c.ops(&[op::FLOAD_0, op::F2D]);
        c.ldc2_double(0.1);
        c.ops(&[op::DADD, op::DRETURN]);
    });
    a.method(PS, "trunc", "(F)I", |c| {
        c.max(1, 1);
        c.ops(&[op::FLOAD_0, op::F2I, op::IRETURN]);
    });
    a.finish()
}

/// Object creation in front of `athrow`, including frames that mention an
/// uninitialized `new` result.
pub fn thrower() -> Vec<u8> {
    let mut a = ClassAssembler::new("Thrower", "java/lang/Object");
    a.source_file("Thrower.java");
    a.default_constructor();
    a.method(PS, "check", "(I)I", |c| {
        c.max(3, 1);
        let ok = c.label();
        c.line(3);
        c.op(op::ILOAD_0);
        c.jump(op::IFGE, ok);
        c.line(4);
        c.class_op(op::NEW, "java/lang/IllegalArgumentException");
        c.op(op::DUP);
        c.ldc_string("negative");
        c.invokespecial("java/lang/IllegalArgumentException", "<init>", "(Ljava/lang/String;)V");
        c.op(op::ATHROW);
        c.bind(ok);
        c.frame_same();
        c.line(5);
        c.ops(&[op::ILOAD_0, op::IRETURN]);
    });
    a.method(PS, "describe", "(I)I", |c| {
        c.max(3, 1);
        let (go, neg, make) = (c.label(), c.label(), c.label());
        c.line(8);
        c.op(op::ILOAD_0);
        c.jump(op::IFNE, go);
        c.ops(&[op::ICONST_0, op::IRETURN]);
        c.bind(go);
        c.frame_same();
        c.line(9);
        let created = c.here();
        c.class_op(op::NEW, "java/lang/IllegalStateException");
        c.op(op::DUP);
        c.op(op::ILOAD_0);
        c.jump(op::IFLE, neg);
        c.ldc_string("pos");
        c.jump(op::GOTO, make);
        c.bind(neg);
        let fresh = VType::Uninitialized(created);
        c.frame_full(&[VType::Int], &[fresh.clone(), fresh.clone()]);
        c.ldc_string("neg");
        c.bind(make);
        c.frame_full(&[VType::Int], &[fresh.clone(), fresh, VType::object("java/lang/String")]);
        c.invokespecial("java/lang/IllegalStateException", "<init>", "(Ljava/lang/String;)V");
        c.op(op::ATHROW);
    });
    a.finish()
}

pub fn calls() -> Vec<u8> {
    let mut a = ClassAssembler::new("Calls", "java/lang/Object");
    a.source_file("Calls.java");
    a.default_constructor();
    a.method(PS, "twice", "(I)I", |c| {
        c.max(1, 1);
        c.line(3);
        c.op(op::ILOAD_0);
        c.invokestatic("Helper", "inc", "(I)I");
        c.invokestatic("Helper", "inc", "(I)I");
        c.op(op::IRETURN);
    });
    a.finish()
}

pub fn helper() -> Vec<u8> {
    let mut a = ClassAssembler::new("Helper", "java/lang/Object");
    a.source_file("Helper.java");
    a.default_constructor();
    a.method(PS, "inc", "(I)I", |c| {
        c.max(2, 1);
        c.line(3);
        c.ops(&[op::ILOAD_0, op::ICONST_1, op::IADD, op::IRETURN]);
    });
    a.finish()
}

/// A local above slot 255, reached through `wide`.
pub fn wide_locals() -> Vec<u8> {
    let mut a = ClassAssembler::new("WideLocals", "java/lang/Object");
    a.source_file("WideLocals.java");
    a.default_constructor();
    a.method(PS, "spread", "(I)I", |c| {
        c.max(2, 300);
        let (start, end) = (c.label(), c.label());
        c.bind(start);
        c.line(3);
        c.op(op::ILOAD_0);
        c.local(op::ISTORE, 260);
        c.iinc(260, 1000);
        c.line(4);
        c.local(op::ILOAD, 260);
        c.op(op::ILOAD_0);
        c.ops(&[op::IADD, op::IRETURN]);
        c.bind(end);
        c.local_var(start, end, "x", "I", 0);
        c.local_var(start, end, "y", "I", 260);
    });
    a.finish()
}

pub fn long_jump() -> Vec<u8> {
    let mut a = ClassAssembler::new("LongJump", "java/lang/Object");
    a.source_file("LongJump.java");
    a.default_constructor();
    a.method(PS, "far", "(I)I", |c| {
        c.max(1, 1);
        let (small, big) = (c.label(), c.label());
        c.op(op::ILOAD_0);
        c.jump(op::IFEQ, small);
        c.goto_w(big);
        c.bind(small);
        c.frame_same();
        c.ops(&[op::ICONST_0, op::IRETURN]);
        c.bind(big);
        c.frame_same();
        c.ops(&[op::ICONST_1, op::IRETURN]);
    });
    a.finish()
}

/// Abstract, native, interface and invokedynamic shapes. Parsed and emitted
/// only; none of it runs.
pub fn shapes() -> Vec<u8> {
    let mut a =
        ClassAssembler::new("Shapes", "java/lang/Object").access(f::PUBLIC | f::SUPER | f::ABSTRACT);
    a.source_file("Shapes.java");
    a.interface("java/io/Serializable");
    a.default_constructor();
    a.declare(f::PUBLIC | f::ABSTRACT, "area", "()D");
    a.declare(f::PUBLIC | f::NATIVE, "nativeHash", "()I");
    a.method(PS, "sizeOf", "(Ljava/util/List;)I", |c| {
        c.max(1, 1);
        c.op(op::ALOAD_0);
        c.invokeinterface("java/util/List", "size", "()I", 1);
        c.op(op::IRETURN);
    });
    let bsm = a.bootstrap_method(
        "java/lang/invoke/StringConcatFactory",
        "makeConcatWithConstants",
        "(Ljava/lang/invoke/MethodHandles$Lookup;Ljava/lang/String;Ljava/lang/invoke/MethodType;\
         Ljava/lang/String;[Ljava/lang/Object;)Ljava/lang/invoke/CallSite;",
        &["n=\u{1}"],
    );
    a.method(PS, "label", "(I)Ljava/lang/String;", |c| {
        c.max(1, 1);
        c.op(op::ILOAD_0);
        c.invokedynamic(bsm, "makeConcatWithConstants", "(I)Ljava/lang/String;");
        c.op(op::ARETURN);
    });
    a.finish()
}

pub fn longs() -> Vec<u8> {
    let mut a = ClassAssembler::new("Longs", "java/lang/Object");
    a.source_file("Longs.java");
    a.default_constructor();
    a.method(PS, "mix", "(JI)J", |c| {
        c.max(4, 3);
        c.op(op::LLOAD_0);
        c.op(op::ILOAD_2);
        c.ops(&[op::I2L, op::LMUL]);
        c.ldc2_long(0x9E37_79B9_7F4A_7C15_u64 as i64);
        c.ops(&[op::LADD, op::LRETURN]);
    });
    a.method(PS, "cmp", "(JJ)I", |c| {
        c.max(4, 4);
        c.op(op::LLOAD_0);
        c.local(op::LLOAD, 2);
        c.ops(&[op::LCMP, op::IRETURN]);
    });
    a.finish()
}

/// An interface with a static method.
pub fn counter() -> Vec<u8> {
    let mut a = ClassAssembler::new("Counter", "java/lang/Object")
        .access(f::PUBLIC | f::INTERFACE | f::ABSTRACT);
    a.source_file("Counter.java");
    a.declare(f::PUBLIC | f::ABSTRACT, "value", "()I");
    a.method(PS, "bump", "(I)I", |c| {
        c.max(2, 1);
        c.line(3);
        c.ops(&[op::ILOAD_0, op::ICONST_3, op::IMUL, op::IRETURN]);
    });
    a.finish()
}

pub fn corpus() -> Vec<Fixture> {
    vec![
        Fixture { name: "FloatTools", bytes: float_tools() },
        Fixture { name: "ClinitHolder", bytes: clinit_holder() },
        Fixture { name: "TryCatch", bytes: try_catch() },
        Fixture { name: "BigPool", bytes: big_pool() },
        Fixture { name: "Loops", bytes: loops() },
        Fixture { name: "Switches", bytes: switches() },
        Fixture { name: "Floats", bytes: floats() },
        Fixture { name: "Thrower", bytes: thrower() },
        Fixture { name: "Calls", bytes: calls() },
        Fixture { name: "Helper", bytes: helper() },
        Fixture { name: "WideLocals", bytes: wide_locals() },
        Fixture { name: "LongJump", bytes: long_jump() },
        Fixture { name: "Shapes", bytes: shapes() },
        Fixture { name: "Longs", bytes: longs() },
        Fixture { name: "Counter", bytes: counter() },
    ]
}

pub fn executable_targets() -> Vec<Target> {
    const T: &[(&str, &str, &str)] = &[
        ("FloatTools", "sign", "(F)I"),
        ("ClinitHolder", "next", "(I)I"),
        ("TryCatch", "safeDiv", "(II)I"),
        ("TryCatch", "guarded", "(I)I"),
        ("BigPool", "pick", "(I)I"),
        ("Loops", "sumTo", "(I)I"),
        ("Switches", "dense", "(I)I"),
        ("Switches", "sparse", "(I)I"),
        ("Floats", "clamp", "(FFF)F"),
        ("Floats", "lerp", "(FFF)F"),
        ("Floats", "scale", "(F)F"),
        ("Floats", "toDouble", "(F)D"),
        ("Floats", "trunc", "(F)I"),
        ("Thrower", "check", "(I)I"),
        ("Thrower", "describe", "(I)I"),
        ("Calls", "twice", "(I)I"),
        ("WideLocals", "spread", "(I)I"),
        ("LongJump", "far", "(I)I"),
        ("Longs", "mix", "(JI)J"),
        ("Longs", "cmp", "(JJ)I"),
        ("Counter", "bump", "(I)I"),
    ];
    T.iter().map(|&(class, method, descriptor)| Target { class, method, descriptor }).collect()
}

/// One goal per instruction of every method with code, numbered per method
/// from 1.
pub fn site_goals(bytes: &[u8]) -> Result<Vec<CoverageGoal>, ClassFileError> {
    let model = classfile::parse_class(bytes)?;
    let class = model.name().into_owned();
    let file = format!("{class}.java");
    let mut goals = Vec::new();
    for m in &model.methods {
        let Some(code) = m.code() else { continue };
        let function = format!("{class}.{}:{}", model.method_name(m), model.method_descriptor(m));
        let lines: Vec<_> = code.line_numbers().map(|l| (l.start, l.line)).collect();
        for ordinal in 0..code.len() {
            let line = lines.iter().filter(|(s, _)| *s <= ordinal).map(|(_, l)| *l).next_back().unwrap_or(1);
            goals.push(CoverageGoal {
                name: format!("{function}.coverage.{}", ordinal + 1),
                description: format!("site {}", ordinal + 1),
                covered_lines: line.to_string(),
                file: file.clone(),
                function: function.clone(),
                line: u32::from(line.max(1)),
                bytecode_index: ordinal,
            });
        }
    }
    Ok(goals)
}
