//! Build the reference cell, tile the unit square and print the measures.

use tissue::geometry::{build_cell_geometry, mean_conductivity, tile_domain, Conductivity};

fn main() -> tissue::Result<()> {
    let cell = build_cell_geometry(0.25, 8)?;
    println!(
        "cell: |E_int| = {}, |E_out| = {}, |Γ| = {}",
        cell.measure_inner(),
        cell.measure_outer(),
        cell.measure_membrane()
    );
    println!("mean conductivity (σ_int = 2, σ_out = 1): {}", mean_conductivity(&cell, 2.0, 1.0)?);

    let sigma = Conductivity::new(2.0, 1.0)?;
    for eps in [0.5, 0.25, 0.125] {
        let dom = tile_domain(&cell, eps)?;
        let s = dom.summary(&sigma);
        println!(
            "ε = {eps}: {} copies, {} bulk unknowns, {} membrane facets, |Γ^ε| = {}",
            s.cell_copies, s.bulk_unknowns, s.membrane_facets, s.measure_membrane_domain
        );
    }
    Ok(())
}
