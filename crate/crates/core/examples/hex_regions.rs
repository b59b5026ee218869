//! Hexagon regions: lasso selection, edits, boundary rings and the admin
//! divisions a region covers.
//!
//! cargo run --example hex_regions

use std::collections::BTreeSet;

use dialingle::geo::{
    cells_in_bounds, cells_in_lasso, divisions_covering, edit_region, hex_center, region_boundary, HexCell, HexRegion,
};
use dialingle::synth::SyntheticFamily;

fn main() {
    let fam = SyntheticFamily::tri(1, 0);
    let family = &fam.registry.family;
    println!("{}: {} cells at resolution {}", family.display_name, cells_in_bounds(family).len(), family.hex_resolution);

    let lasso = [(6.5, 46.0), (7.5, 46.0), (7.5, 46.8), (6.5, 46.8)];
    let picked = cells_in_lasso(&lasso, family).unwrap();
    println!("lasso picked {} cells", picked.len());

    let region = HexRegion { family_id: family.family_id.clone(), cells: picked.clone() };
    // an interior cell: removing it punches a hole, giving a second ring
    let hole: BTreeSet<HexCell> = picked
        .iter()
        .copied()
        .filter(|c| c.neighbors().iter().all(|n| picked.contains(n)))
        .take(1)
        .collect();
    let edited = edit_region(&region, &BTreeSet::new(), &hole, family).unwrap();
    let removed = hole.iter().next().unwrap();
    println!("removed {removed} at {:?}", hex_center(*removed, family));

    for (name, r) in [("lasso", &region), ("with hole", &edited)] {
        let rings = region_boundary(r, family);
        let sizes: Vec<usize> = rings.iter().map(|ring| ring.len() - 1).collect();
        println!("{name}: {} rings, vertex counts {sizes:?}", rings.len());
    }

    let pair = HexRegion { family_id: family.family_id.clone(), cells: [HexCell::new(3, 3), HexCell::new(4, 3)].into() };
    println!("two neighbours: {} boundary vertices", region_boundary(&pair, family)[0].len() - 1);

    for label in &fam.registry.labels {
        let covered = divisions_covering(&label.region(), &fam.divisions.divisions, family);
        println!("{} covers {:?}", label.name(), covered);
    }
}
