//! Retrieval and similarity search against brute-force recomputation.

mod common;

use common::oracle::{check_stores, cos, order, random_space, random_vector};
use layered_trading::memory::{LayerKind, MemoryConfig, MemoryEvent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn top_k_matches_full_sort_oracle() {
    check_stores(200, 2024).unwrap();
}

#[test]
fn similarity_search_matches_linear_scan() {
    let config = MemoryConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let space = random_space(&mut rng, 1000, &config);
    for _ in 0..20 {
        let query = random_vector(&mut rng);
        let n = rng.random_range(1..=100);
        for layer in LayerKind::ALL {
            let mut scan: Vec<(&MemoryEvent, f64)> = space.layer(layer).map(|e| (e, cos(&e.embedding, &query))).collect();
            scan.sort_by(order);
            scan.truncate(n);
            let got = space.similarity_search(layer, &query, n).unwrap();
            assert_eq!(got.len(), scan.len());
            for ((e, c), (oe, oc)) in got.iter().zip(&scan) {
                assert_eq!(e.id, oe.id);
                assert!((c - oc).abs() < 1e-12);
            }
        }
    }
}
