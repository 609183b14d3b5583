use hybridlin::grid::{BoundaryData, Bump, DomainMasks, Grid, ScalarField};
use hybridlin::inversion::{invert_A0x1, qpat_background, qpat_lambda_reconstruct};
use hybridlin::linearization::{AetLinearization, LinearMap, QpatLinearization};

#[test]
fn qpat_plug_back_reproduces_data() {
    let g = Grid::unit(31).unwrap();
    let masks = DomainMasks::with_defaults(g).unwrap();
    let lambda = 0.1;
    let (s0, g0, f) = qpat_background(g, lambda);
    let rho = Bump::new((0.48, 0.52), 0.2, 1.0).field(g);
    let nu = Bump::new((0.52, 0.47), 0.18, 0.5).field(g);
    let maps: Vec<QpatLinearization> = f.iter().map(|fj| QpatLinearization::new(&masks, &s0, &g0, fj).unwrap()).collect();
    let data: Vec<ScalarField> = maps.iter().map(|m| m.apply(&[rho.clone(), nu.clone()]).unwrap()).collect();
    let r = qpat_lambda_reconstruct(lambda, &data[0], &data[1], &data[2], &masks).unwrap();
    let r = r.with_truth(&masks, &rho, Some(&nu)).unwrap();
    let err = r.rel_l2_error.unwrap().max(r.nu_rel_l2_error.unwrap());
    let nu_hat = r.nu_hat.clone().unwrap();
    for (m, d) in maps.iter().zip(&data) {
        let back = m.apply(&[r.rho_hat.clone(), nu_hat.clone()]).unwrap();
        let res = back.sub(d).unwrap().norm_l2() / d.norm_l2();
        assert!(res <= 2.0 * err, "plug-back {res:e} vs reconstruction {err:e}");
    }
}

fn a0x1_error(n: usize, p: f64) -> f64 {
    let g = Grid::unit(n).unwrap();
    let masks = DomainMasks::with_defaults(g).unwrap();
    let rho = Bump::new((0.5, 0.5), 0.25, 1.0).field(g);
    let lin = AetLinearization::new(&masks, &ScalarField::zeros(g), &BoundaryData::from_real_fn(g, |x, _| x), p).unwrap();
    let data = lin.apply(&[rho.clone()]).unwrap();
    invert_A0x1(&data, p, &masks).unwrap().with_truth(&masks, &rho, None).unwrap().rel_l2_error.unwrap()
}

#[test]
fn a0x1_degrades_toward_p_one() {
    // Measured at n=31: about 2.4e-2 at p=0.5 and 0.74 at p=0.99.
    let mid = a0x1_error(31, 0.5);
    let near = a0x1_error(31, 0.99);
    assert!(mid < 3e-2, "{mid}");
    assert!(near.is_finite() && near > 10.0 * mid, "{near} vs {mid}");
}

#[test]
fn a0x1_rejects_p_outside_unit_interval() {
    let g = Grid::unit(7).unwrap();
    let masks = DomainMasks::with_defaults(g).unwrap();
    let d = ScalarField::zeros(g);
    for p in [0.0, 1.0, 2.0, -0.5] {
        assert!(invert_A0x1(&d, p, &masks).is_err());
    }
}
