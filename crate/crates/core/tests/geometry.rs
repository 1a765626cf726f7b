use std::f64::consts::{FRAC_PI_6, PI};

use conecert::sphere_geom::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn preset_areas() {
    let cap = build_domain(&DomainSpec::Cap { theta: 0.0, r: 0.5 }, 0.05).unwrap();
    assert!(rel(surface_measure(&cap), PI) < 0.01);
    let tube = build_domain(&DomainSpec::Tube { k: 1, r: FRAC_PI_6 }, 0.05).unwrap();
    assert!(rel(surface_measure(&tube), 2.0 * PI) < 0.01);
    let hemi = build_domain(&DomainSpec::Hemisphere, 0.05).unwrap();
    assert!(rel(surface_measure(&hemi), 2.0 * PI) < 0.01);
    let w: f64 = hemi.node_weights().iter().sum();
    assert!((w - surface_measure(&hemi)).abs() < 1e-12);
    assert!(hemi.node_weights().iter().all(|&w| w > 0.0));
}

#[test]
fn hemisphere_measure_recursion() {
    assert!((hemisphere_measure(2) - PI).abs() < 1e-14);
    assert!((hemisphere_measure(3) - 2.0 * PI).abs() < 1e-14);
    assert!((hemisphere_measure(4) - PI * PI).abs() < 1e-13);
}

#[test]
fn boundary_lengths() {
    let r: f64 = 0.5;
    let cap = build_domain(&DomainSpec::Cap { theta: 0.3, r }, 0.03).unwrap();
    let len = integrate_boundary_fn(&cap, |_, _| 1.0).unwrap();
    assert!(rel(len, 2.0 * PI * (1.0 - r * r).sqrt()) < 1e-3);
    let tube = build_domain(&DomainSpec::Tube { k: 1, r: 0.4 }, 0.03).unwrap();
    let len = integrate_boundary_fn(&tube, |_, _| 1.0).unwrap();
    assert!(rel(len, 4.0 * PI * 0.4f64.cos()) < 1e-3);
    let arc = build_domain(&DomainSpec::Arc { beta: 2.0 }, 0.01).unwrap();
    let ones = vec![1.0; arc.boundary().len()];
    assert_eq!(integrate_on_boundary(&arc, &ones).unwrap(), 2.0);
}

#[test]
fn analytic_conormals() {
    let (theta, r) = (0.4f64, 0.6f64);
    let cap = build_domain(&DomainSpec::Cap { theta, r }, 0.05).unwrap();
    let c = [theta.sin(), 0.0, theta.cos()];
    for b in cap.boundary() {
        let x = cap.node(b.node);
        let expect = scale3(1.0 / (1.0 - r * r).sqrt(), &sub3(&scale3(r, x), &c));
        assert!(norm3(&sub3(&expect, &b.conormal)) < 1e-8);
    }
    let rt = 0.45f64;
    let tube = build_domain(&DomainSpec::Tube { k: 1, r: rt }, 0.05).unwrap();
    for b in tube.boundary() {
        let x = cap_split(tube.node(b.node), rt);
        let expect = add3(&scale3(-rt.sin(), &x.0), &scale3(rt.cos(), &x.1));
        assert!(norm3(&sub3(&expect, &b.conormal)) < 1e-8);
    }
}

// x = y cos r + z sin r with y in the equatorial plane, z = ±e₃
fn cap_split(x: &Vec3, r: f64) -> (Vec3, Vec3) {
    let z = [0.0, 0.0, x[2].signum()];
    let y = [x[0] / r.cos(), x[1] / r.cos(), 0.0];
    (y, z)
}

#[test]
fn area_converges_at_second_order() {
    for spec in [DomainSpec::Cap { theta: 0.2, r: 0.4 }, DomainSpec::Tube { k: 1, r: 0.5 }, DomainSpec::Hemisphere] {
        let exact = spec.exact_area().unwrap();
        let e1 = (surface_measure(&build_domain(&spec, 0.1).unwrap()) - exact).abs();
        let e2 = (surface_measure(&build_domain(&spec, 0.05).unwrap()) - exact).abs();
        let order = (e1 / e2).log2();
        assert!(order >= 1.5, "{spec}: observed order {order}");
    }
}

#[test]
fn second_moment_on_hemisphere() {
    let hemi = build_domain(&DomainSpec::Hemisphere, 0.03).unwrap();
    let f: Vec<f64> = hemi.nodes().iter().map(|x| x[0] * x[0]).collect();
    assert!(rel(integrate_on_domain(&hemi, &f).unwrap(), 2.0 * PI / 3.0) < 0.01);
    let odd = hemi.linear_field(&[1.0, 0.0, 0.0]);
    let v = integrate_on_domain(&hemi, &odd).unwrap();
    assert!(v.abs() < 1e-6, "odd moment {v}");
}

#[test]
fn tunnel_is_symmetric_and_sized() {
    let spec = DomainSpec::Tunnel { theta: 50f64.to_radians(), r: 0.85, eps: 0.05 };
    let m = build_domain(&spec, 0.03).unwrap();
    let caps = 2.0 * 2.0 * PI * (1.0 - 0.85);
    let a = surface_measure(&m);
    assert!(a > caps && a < caps + 0.2, "tunnel area {a}");
    let odd = m.linear_field(&[1.0, 0.0, 0.0]);
    assert!(integrate_on_domain(&m, &odd).unwrap().abs() < 1e-6 * a);
}
