//! Fast transforms against the naive `O(N^2)` DFT.

mod common;

use common::{naive_dft, naive_dft2, rand_complex};
use kspace_dps::math::{dft2_forward, dft2_inverse, dft_forward, dft_inverse, ComplexGrid, RngHandle};

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn one_dimensional_matches_naive() {
    let mut rng = RngHandle::new(1);
    for n in [4, 8, 16, 128] {
        let x = rand_complex(n, &mut rng);
        let fast = dft_forward(&x).unwrap();
        let (re, im) = naive_dft(&x.re, &x.im, -1.0);
        assert!(max_diff(&fast.re, &re) < 1e-9 && max_diff(&fast.im, &im) < 1e-9, "N={n}");
        let inv = dft_inverse(&x).unwrap();
        let (re, im) = naive_dft(&x.re, &x.im, 1.0);
        assert!(max_diff(&inv.re, &re) < 1e-9 && max_diff(&inv.im, &im) < 1e-9, "N={n}");
        let back = dft_inverse(&fast).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-10, "N={n}");
    }
}

#[test]
fn two_dimensional_matches_naive() {
    let mut rng = RngHandle::new(2);
    for (rows, cols) in [(4, 4), (32, 32), (8, 16)] {
        let v = rand_complex(rows * cols, &mut rng);
        let x = ComplexGrid::from_vector(rows, cols, v.clone()).unwrap();
        let fast = dft2_forward(&x).unwrap();
        let (re, im) = naive_dft2(rows, cols, &v.re, &v.im, -1.0);
        assert!(max_diff(&fast.re, &re) < 1e-9 && max_diff(&fast.im, &im) < 1e-9);
        let back = dft2_inverse(&fast).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-10);
    }
}
