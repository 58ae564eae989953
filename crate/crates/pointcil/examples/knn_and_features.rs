//! kNN queries and the hand-crafted per-point features: PCA normals, height
//! above the floor, ball density, and edge feature differences.

use pointcil::cloud::{generate_scene, SceneSpec};
use pointcil::features::{
    compute_height, edge_differences, estimate_density, estimate_normals, geometric_feature,
    semantic_feature, FeatureKind, FeatureMatrix,
};
use pointcil::knn::KnnIndex;

fn main() -> pointcil::Result<()> {
    let spec = SceneSpec {
        n_classes: 2,
        points_per_class: vec![300, 300],
        cluster_centers: vec![[0.0, 0.0, 0.0], [6.0, 0.0, 1.5]],
        cluster_stddev: vec![0.2, 0.8],
        overlap_shift: vec![],
        color_means: vec![[0.9, 0.1, 0.1], [0.1, 0.1, 0.9]],
        seed: 3,
    };
    let cloud = generate_scene(&spec)?;
    let index = KnnIndex::build(&cloud);

    let k = 8;
    println!("nearest neighbors of point 0 (self first): {:?}", index.query(0, 5));
    println!(
        "nearest to an arbitrary position: {:?}",
        index.query_position([0.0, 0.0, 0.0], 3)
    );

    let normals = estimate_normals(&cloud, &index, k)?;
    let heights = compute_height(&cloud);
    let density = estimate_density(&cloud, &index, k)?;
    println!("\npoint 0: normal {:?}", normals[0]);
    println!("height range: 0 .. {:.3}", heights.iter().cloned().fold(0.0, f64::max));
    let mean_density = |class: i32| {
        let vals: Vec<f64> = (0..cloud.len())
            .filter(|&i| cloud.labels[i] == class)
            .map(|i| density[i])
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    println!(
        "mean density: tight cluster {:.1}, loose cluster {:.1} (points / m^3)",
        mean_density(0),
        mean_density(1)
    );

    let geo = geometric_feature(&cloud, &index, k)?;
    let sem = semantic_feature(&cloud, &index, k)?;
    println!("\ngeometric columns: {:?}", geo.column_names);
    println!("semantic columns:  {:?}", sem.column_names);

    let raw = geo.values.hcat(&sem.values)?;
    let names: Vec<String> = geo
        .column_names
        .iter()
        .chain(sem.column_names.iter())
        .cloned()
        .collect();
    let fm = FeatureMatrix::new(raw, FeatureKind::Embedding, names)?;
    let edges = edge_differences(&fm, &index, k)?;
    println!(
        "edge tensor: {} points x {} neighbors x {} values (feature, difference)",
        edges.n, edges.k, edges.width
    );
    println!("first edge of point 0: {:?}", &edges.edge(0, 0)[..4]);
    Ok(())
}
