#![allow(dead_code)]

use hsthermo::lindblad::LindbladSpec;
use hsthermo::linops::{Operator, C64};
use ndarray::Array2;
use proptest::prelude::*;

pub fn complex_matrix(dim: usize, scale: f64) -> impl Strategy<Value = Array2<C64>> {
    prop::collection::vec((-scale..scale, -scale..scale), dim * dim)
        .prop_map(move |v| Array2::from_shape_fn((dim, dim), |(i, j)| {
            let (re, im) = v[i * dim + j];
            C64::new(re, im)
        }))
}

pub fn hermitian(dim: usize, scale: f64) -> impl Strategy<Value = Operator> {
    complex_matrix(dim, scale).prop_map(|m| {
        let h = (&m + &m.t().mapv(|z| z.conj())).mapv(|z| z * 0.5);
        Operator::new(h).unwrap()
    })
}

/// `G G† / tr(G G†)` with a small identity admixture so the state is full rank.
pub fn density(dim: usize) -> impl Strategy<Value = Operator> {
    complex_matrix(dim, 1.0).prop_map(move |g| {
        let mut rho = g.dot(&g.t().mapv(|z| z.conj()));
        for i in 0..dim {
            rho[[i, i]] += C64::new(1e-3, 0.0);
        }
        let tr: C64 = (0..dim).map(|i| rho[[i, i]]).sum();
        Operator::new(rho.mapv(|z| z / tr)).unwrap().hermitian_part()
    })
}

pub fn lindblad_spec(dim: usize) -> impl Strategy<Value = LindbladSpec> {
    (
        hermitian(dim, 1.0),
        prop::collection::vec((0.0..2.0f64, complex_matrix(dim, 1.0)), 1..=3),
    )
        .prop_map(|(h, jumps)| {
            jumps.into_iter().fold(LindbladSpec::new(h), |s, (rate, k)| {
                s.with_jump(rate, Operator::new(k).unwrap())
            })
        })
}

pub fn lindblad_spec_2_to_4() -> impl Strategy<Value = LindbladSpec> {
    (2usize..=4).prop_flat_map(lindblad_spec)
}
