mod common;

use common::*;
use softcheck::rng::SeededRng;
use softcheck::{bounding_hypercube, sample_shell, Hypercube, ShellSpec};

fn oracle_exceed(mins: &[f64], maxs: &[f64], x: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let r = maxs[i] - mins[i];
        if r == 0.0 {
            continue;
        }
        let below = (mins[i] - x[i]) / r;
        let above = (x[i] - maxs[i]) / r;
        worst = worst.max(below).max(above);
    }
    worst
}

fn random_box(rng: &mut SeededRng, d: usize) -> Hypercube {
    let mins: Vec<f64> = (0..d).map(|_| rng.range(-50.0, 50.0)).collect();
    let maxs = mins.iter().map(|m| m + rng.range(1e-3, 20.0)).collect();
    Hypercube { mins, maxs }
}

#[test]
fn shell_points_lie_in_the_band_and_outside_the_box() {
    let mut rng = SeededRng::new(17);
    for &d in &[1usize, 2, 6, 30, 87] {
        let cube = random_box(&mut rng, d);
        let pts = sample_shell(&cube, &ShellSpec::new(300, rng.next_u64())).unwrap();
        assert_eq!((pts.rows(), pts.cols()), (300, d));
        for p in pts.iter_rows() {
            let e = oracle_exceed(&cube.mins, &cube.maxs, p);
            assert!((0.20..=0.25).contains(&e), "d={d}: exceed {e}");
            assert!(p.iter().zip(cube.mins.iter().zip(&cube.maxs)).any(|(v, (lo, hi))| v < lo || v > hi));
        }
    }
}

#[test]
fn bounding_box_ignores_row_order() {
    let mut rng = SeededRng::new(4);
    let x = random_matrix(&mut rng, 40, 5, 3.0);
    let mut order: Vec<usize> = (0..40).collect();
    rng.shuffle(&mut order);
    assert_eq!(bounding_hypercube(&x).unwrap(), bounding_hypercube(&x.select_rows(&order)).unwrap());
}

#[test]
fn degenerate_dimensions_are_pinned() {
    let cube = Hypercube {
        mins: vec![0.0, 2.0, -1.0],
        maxs: vec![1.0, 2.0, 1.0],
    };
    let pts = sample_shell(&cube, &ShellSpec::new(200, 9)).unwrap();
    assert!(pts.iter_rows().all(|p| p[1] == 2.0));
    assert!(pts.iter_rows().all(|p| (0.2..=0.25).contains(&cube.exceed(p))));
}

#[test]
fn fully_degenerate_box_is_a_config_error() {
    let cube = Hypercube {
        mins: vec![1.0, 1.0],
        maxs: vec![1.0, 1.0],
    };
    assert!(matches!(sample_shell(&cube, &ShellSpec::new(5, 0)), Err(softcheck::Error::Config(_))));
}

#[test]
fn same_seed_same_points() {
    let cube = Hypercube {
        mins: vec![-1.0; 4],
        maxs: vec![1.0; 4],
    };
    let a = sample_shell(&cube, &ShellSpec::new(50, 123)).unwrap();
    let b = sample_shell(&cube, &ShellSpec::new(50, 123)).unwrap();
    let c = sample_shell(&cube, &ShellSpec::new(50, 124)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
