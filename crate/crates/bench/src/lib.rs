//! Fixed workloads shared by the criterion benchmarks.

use treeswap::{Configuration, GeneratorSpec, HeightPolicy, Shape};

/// `(label, configuration)` pairs covering the three generator shapes.
pub fn workloads(n: usize) -> Vec<(String, Configuration)> {
    let uniform = HeightPolicy::Uniform {
        lo: -(n as i64),
        hi: n as i64,
        seed: 7,
    };
    [
        Shape::LowerBound { n },
        Shape::AlmostLinear { n },
        Shape::Random { n, seed: 7 },
    ]
    .into_iter()
    .map(|shape| {
        let heights = match shape {
            Shape::LowerBound { .. } => HeightPolicy::Exact,
            _ => uniform,
        };
        let cfg = GeneratorSpec { shape, heights }
            .build()
            .expect("odd n builds");
        (format!("{}/{n}", shape.label()), cfg)
    })
    .collect()
}
