use std::f64::consts::PI;

use conecert::flow::{riesz_projected_gradient, Metric};
use conecert::graph_functionals::{perimeter, perimeter_gradient_vector, project_volume, volume, volume_gradient_vector, RadialGraph};
use conecert::sphere_geom::{build_domain, DomainSpec, SphericalMesh};
use conecert::torsion::{torsion_energy, ProfileDomain};
use proptest::prelude::*;

fn arc(beta: f64) -> SphericalMesh {
    build_domain(&DomainSpec::Arc { beta }, beta / 40.0).unwrap()
}

fn field(mesh: &SphericalMesh, a: &[f64]) -> Vec<f64> {
    mesh.nodes().iter().map(|x| a[0] * x[0] + a[1] * x[1] + a[2] * x[0] * x[1] + a[3]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_hits_target_volume(beta in 0.5..5.5f64, a in prop::array::uniform4(-0.5..0.5f64), c in 0.1..10.0f64) {
        let mesh = arc(beta);
        let g = RadialGraph::new(&mesh, field(&mesh, &a)).unwrap();
        let v = volume(&project_volume(&g, c).unwrap()).unwrap();
        prop_assert!((v - c).abs() <= 1e-10 * c);
    }

    #[test]
    fn perimeter_scales_like_a_hypersurface(beta in 0.5..5.5f64, a in prop::array::uniform4(-0.5..0.5f64), s in -1.0..1.0f64) {
        let mesh = arc(beta);
        let g = RadialGraph::new(&mesh, field(&mesh, &a)).unwrap();
        let p0 = perimeter(&g).unwrap();
        let p1 = perimeter(&g.shifted(s)).unwrap();
        prop_assert!((p1 - s.exp() * p0).abs() <= 1e-12 * p1.abs());
    }

    #[test]
    fn riesz_direction_is_volume_tangent(beta in 0.5..5.5f64, a in prop::array::uniform4(-0.5..0.5f64), h1 in any::<bool>()) {
        let mesh = arc(beta);
        let g = RadialGraph::new(&mesh, field(&mesh, &a)).unwrap();
        let grad = perimeter_gradient_vector(&g);
        let metric = if h1 { Metric::H1 } else { Metric::L2 };
        let dir = riesz_projected_gradient(&g, &grad, metric).unwrap();
        let dv = volume_gradient_vector(&g);
        let tangent: f64 = dv.iter().zip(&dir.d).map(|(a, b)| a * b).sum();
        let scale: f64 = dv.iter().zip(&dir.d).map(|(a, b)| (a * b).abs()).sum::<f64>() + 1e-300;
        prop_assert!(tangent.abs() <= 1e-9 * scale);
        prop_assert!(dir.slope >= -1e-14);
    }

    #[test]
    fn torsion_energy_is_negative_and_scales(beta in 0.5..5.5f64, a in prop::array::uniform3(-0.3..0.3f64), s in -0.7..0.7f64) {
        let p = ProfileDomain::from_spec(&DomainSpec::Arc { beta }, 16).unwrap();
        let phi: Vec<f64> = p.nodes().iter().map(|t| a[0] + a[1] * (PI * t / beta).cos() + a[2] * (2.0 * PI * t / beta).cos()).collect();
        let e0 = torsion_energy(&p, &phi, 16).unwrap();
        let up: Vec<f64> = phi.iter().map(|x| x + s).collect();
        let e1 = torsion_energy(&p, &up, 16).unwrap();
        prop_assert!(e0.e_u < 0.0);
        prop_assert!((e0.e_u - e0.e_grad).abs() <= 1e-10 * e0.e_u.abs());
        prop_assert!((e1.e_u - (4.0 * s).exp() * e0.e_u).abs() <= 1e-10 * e1.e_u.abs());
    }
}

#[test]
fn second_variation_forms_agree_on_zero_mean_fields() {
    use conecert::spectral::solve_neumann_spectrum;
    use conecert::torsion::torsion_second_variation_at_zero;
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let beta = 1.5 * PI;
    let spec = solve_neumann_spectrum(&arc(beta), 6).unwrap();
    for _ in 0..20 {
        let mut c: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
        c[0] = 0.0;
        let sv = torsion_second_variation_at_zero(&spec, &c, 2).unwrap();
        assert!((sv.spectral - sv.energy_form).abs() <= 1e-10 * sv.spectral.abs().max(1.0));
    }
    assert!(torsion_second_variation_at_zero(&spec, &[1.0, 0.5], 2).is_err());
}
