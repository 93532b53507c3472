use goalcov::classfile::{decode_code, encode_code, Constant};
use goalcov::{emit_class, fixtures, parse_class};

#[test]
fn corpus_round_trips_byte_for_byte() {
    let corpus = fixtures::corpus();
    assert!(corpus.len() >= 10);
    for f in &corpus {
        let model = parse_class(&f.bytes).unwrap_or_else(|e| panic!("{}: {e}", f.name));
        assert_eq!(model.name(), f.name);
        assert_eq!(emit_class(&model).unwrap(), f.bytes, "{}", f.name);
    }
}

#[test]
fn corpus_covers_the_awkward_shapes() {
    let models: Vec<_> = fixtures::corpus().iter().map(|f| parse_class(&f.bytes).unwrap()).collect();
    let has_clinit = models.iter().any(|m| m.find_method("<clinit>", "()V").is_some());
    let has_handlers = models.iter().flat_map(|m| &m.methods).filter_map(|m| m.code()).any(|c| !c.exception_table.is_empty());
    let big_pool = models.iter().any(|m| m.pool.count() > 256);
    let wide = models.iter().any(|m| m.pool.iter().any(|(_, c)| matches!(c, Constant::Long(_) | Constant::Double(_))));
    assert!(has_clinit && has_handlers && big_pool && wide);
}

#[test]
fn code_attributes_decode_and_reencode() {
    for f in fixtures::corpus() {
        let model = parse_class(&f.bytes).unwrap();
        for m in &model.methods {
            let Some(code) = m.code() else { continue };
            let bytes = encode_code(code).unwrap();
            let again = decode_code(&bytes, &model.pool).unwrap();
            assert_eq!(&again, code, "{}.{}", f.name, model.method_name(m));
        }
    }
}

#[test]
fn instrumented_classes_round_trip() {
    for f in fixtures::corpus() {
        let goals = fixtures::site_goals(&f.bytes).unwrap();
        let mut db = goalcov::HitCountDb::default();
        let uids = goalcov::assign_uids(&goals, &mut db);
        let out = goalcov::instrument_class(&f.bytes, &goals, &uids).unwrap();
        let model = parse_class(&out.bytes).unwrap();
        assert_eq!(emit_class(&model).unwrap(), out.bytes, "{}", f.name);
    }
}
