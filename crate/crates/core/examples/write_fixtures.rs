//! Writes the fixture corpus and the FloatTools inputs to a directory
//! (default `fixtures/`) for use with the command-line tool.

use std::fs;
use std::path::PathBuf;

use goalcov::fixtures;
use goalcov::minimize::{traces_to_json, Trace};

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    fs::create_dir_all(&dir)?;
    for f in fixtures::corpus() {
        fs::write(dir.join(format!("{}.class", f.name)), &f.bytes)?;
    }
    fs::write(dir.join("goals.json"), fixtures::float_tools_goals_json())?;
    fs::write(dir.join("suite.json"), fixtures::float_tools_suite_json(false))?;
    fs::write(dir.join("suite-nan.json"), fixtures::float_tools_suite_json(true))?;
    let goal = |n: u32| format!("FloatTools.sign:(F)I.coverage.{n}");
    let traces = [
        Trace::new("zero", [1, 2, 4].map(goal)),
        Trace::new("negative", [1, 2, 3, 5, 6].map(goal)),
        Trace::new("positive", [1, 2, 3, 5, 7, 8].map(goal)),
        Trace::new("nan", [1, 2, 3, 5, 7, 9].map(goal)),
    ];
    fs::write(dir.join("traces.json"), traces_to_json(&traces))?;
    println!("wrote fixtures to {}", dir.display());
    Ok(())
}
