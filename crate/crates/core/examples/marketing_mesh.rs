//! Builds the three-product marketing mesh and walks its composition graph.

mod common;

use datamesh::mesh::Direction;
use datamesh::ProductId;

fn main() -> common::AnyResult<()> {
    let (_home, op) = common::marketing_mesh()?;
    let state = op.state();

    println!("products in dependency order:");
    for id in state
        .graph
        .topological_order()
        .map_err(|c| format!("cycle through {c:?}"))?
    {
        let p = state.graph.get(&id).expect("listed product exists");
        println!(
            "  {id} ({:?}): {} output, {} input",
            p.archetype,
            p.output_ports.len(),
            p.input_ports.len()
        );
    }

    println!("edges:");
    for e in state.graph.edges() {
        println!("  {} <- {}", e.consumer, e.producer);
    }

    let recs: ProductId = "marketing/customer-recommendations".parse()?;
    let details: ProductId = "marketing/customer-details".parse()?;
    println!("upstream of {recs}: {:?}", op.lineage(&recs, Direction::Upstream)?);
    println!(
        "downstream of {details}: {:?}",
        op.lineage(&details, Direction::Downstream)?
    );

    // Retiring a product others read from needs `force`.
    match op.decommission("platform", &details, false) {
        Err(e) => println!("decommission refused: {e}"),
        Ok(_) => unreachable!("details has a consumer"),
    }
    Ok(())
}
