//! Write a simulated panel in long format, read it back with a custom schema.

use idid::data::{read_panel, write_panel, Dataset, Schema};
use idid::sim::{gen_exp2, Exp2Config};

pub fn run() -> idid::Result<()> {
    let draw = gen_exp2(
        &Exp2Config {
            n: 200,
            ..Exp2Config::default()
        },
        8,
    )?;
    let Dataset::Panel(p) = &draw.dataset else {
        unreachable!()
    };
    let schema = Schema {
        unit: "id".into(),
        y: "earnings".into(),
        never: "never".into(),
        ..Schema::default()
    };
    let mut buf = Vec::new();
    write_panel(p, &mut buf, &schema)?;
    let text = String::from_utf8(buf).expect("csv is utf-8");
    for line in text.lines().take(4) {
        println!("{line}");
    }
    let back = read_panel(text.as_bytes(), &schema)?;
    println!("round trip identical: {}", &back == p);
    Ok(())
}

#[allow(dead_code)]
fn main() -> idid::Result<()> {
    run()
}
