use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use hybridlin::grid::{DomainMasks, Grid, Rect, ScalarField};
use hybridlin::inversion::{pinv_solve, spectrum_of};
use hybridlin::io::{grid_binary, grid_text, read_grid_binary, read_grid_text};
use hybridlin::linearization::{assemble_stacked, AetLinearization};
use hybridlin::microlocal::aet_symbol;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn aet_symbol_lower_bound(sigma in -1.0f64..1.0, p in 0.05f64..0.99, gx in -3.0f64..3.0, gy in -3.0f64..3.0, a in 0.0f64..std::f64::consts::TAU) {
        let g = [C64::new(gx, 0.0), C64::new(gy, 0.0)];
        let xi = [a.cos(), a.sin()];
        let v = aet_symbol(C64::new(sigma, 0.0), g, p, xi).norm();
        let bound = (2.0 * sigma / p).exp() * (2.0 / p) * (1.0 - p) * (gx * gx + gy * gy);
        prop_assert!(v >= bound - 1e-12 * bound.max(1.0), "{v} < {bound}");
    }

    #[test]
    fn pinv_is_left_inverse_off_the_kernel(rows in 4usize..12, cols in 1usize..6, dup in any::<bool>(), seed in any::<u64>()) {
        let cols = cols.min(rows);
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut m = DMatrix::from_fn(rows, cols, |_, _| C64::new(next(), next()));
        if dup && cols > 1 {
            let c0 = m.column(0).clone_owned();
            m.set_column(cols - 1, &c0);
        }
        let x: Vec<C64> = (0..cols).map(|_| C64::new(next(), next())).collect();
        let b: Vec<C64> = (&m * nalgebra::DVector::from_vec(x.clone())).iter().copied().collect();
        let (y, kernel) = pinv_solve(&m, &b, 1e-8).unwrap();
        prop_assert_eq!(kernel, if dup && cols > 1 { 1 } else { 0 });
        let svd = m.clone().svd(false, true);
        let vt = svd.v_t.unwrap();
        let smax = svd.singular_values.max();
        let d = nalgebra::DVector::from_vec(x.iter().zip(&y).map(|(a, b)| a - b).collect());
        let mut proj = 0.0;
        for (i, sv) in svd.singular_values.iter().enumerate() {
            if *sv > 1e-8 * smax {
                proj += (vt.row(i) * &d)[0].norm_sqr();
            }
        }
        let xn = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(proj.sqrt() <= 1e-8 * xn, "{} vs {}", proj.sqrt(), xn);
    }

    #[test]
    fn grid_dumps_round_trip(n in 3usize..10, x0 in -2.0f64..2.0, y0 in -2.0f64..2.0, w in 0.1f64..3.0, seed in any::<u64>()) {
        let g = Grid::new(n, Rect::new(x0, y0, w, w)).unwrap();
        let mut s = seed;
        let values: Vec<C64> = (0..g.len())
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                C64::new(f64::from_bits(s >> 2) % 1e6, (s as f64).sqrt() * 1e-7)
            })
            .collect();
        let f = ScalarField::from_values(g, values).unwrap();
        let (a, ha) = read_grid_binary(&grid_binary(&f, "0123456789abcdef")).unwrap();
        let (b, hb) = read_grid_text(&grid_text(&f, "0123456789abcdef")).unwrap();
        prop_assert_eq!(ha, "0123456789abcdef");
        prop_assert_eq!(hb, "0123456789abcdef");
        prop_assert_eq!(a.values(), f.values());
        prop_assert_eq!(b.values(), f.values());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn singular_values_ignore_row_order(seed in any::<u64>()) {
        let g = Grid::unit(11).unwrap();
        let masks = DomainMasks::with_defaults(g).unwrap();
        let zero = ScalarField::zeros(g);
        let a = AetLinearization::new(&masks, &zero, &hybridlin::grid::BoundaryData::from_real_fn(g, |x, _| x), 0.5).unwrap();
        let b = AetLinearization::new(&masks, &zero, &hybridlin::grid::BoundaryData::from_real_fn(g, |_, y| y), 0.5).unwrap();
        let op = assemble_stacked(&[&a, &b], &masks).unwrap();
        let rows = op.matrix.nrows();
        let mut perm: Vec<usize> = (0..rows).collect();
        let mut s = seed;
        for i in (1..rows).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled = DMatrix::from_fn(rows, op.matrix.ncols(), |i, j| op.matrix[(perm[i], j)]);
        let s1 = spectrum_of(&op.matrix, 1e-8).singular_values;
        let s2 = spectrum_of(&shuffled, 1e-8).singular_values;
        let top = s1[0];
        for (x, y) in s1.iter().zip(&s2) {
            prop_assert!((x - y).abs() <= 1e-10 * top);
        }
    }
}
