//! Parses, validates and re-serializes `.dp.json` descriptors.

mod common;

use datamesh::descriptor::{parse_descriptor, serialize_descriptor, validate_descriptor};

fn main() -> common::AnyResult<()> {
    for text in [common::TRACKING, common::DETAILS, common::RECOMMENDATIONS] {
        let d = parse_descriptor(text)?;
        let again = parse_descriptor(&serialize_descriptor(&d))?;
        assert_eq!(d, again);
        println!(
            "{}: {} output port(s), {} input port(s), round trip ok",
            d.product_id()?,
            d.output_ports.len(),
            d.input_ports.len()
        );
    }

    let broken = include_str!("../fixtures/invalid/missing-interface.dp.json");
    println!("missing interface: {}", parse_descriptor(broken).unwrap_err());

    let empty = parse_descriptor(include_str!("../fixtures/invalid/no-output-ports.dp.json"))?;
    for problem in validate_descriptor(&empty) {
        println!("no output ports: {problem}");
    }
    Ok(())
}
