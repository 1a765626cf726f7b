use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Analytic description of a domain `D` on the unit sphere.
///
/// Spec strings follow `name:key=value,...`; angles are radians unless
/// suffixed with `deg`.
///
/// | preset | keys | sphere |
/// |---|---|---|
/// | `arc` | `beta` | S¹ |
/// | `cap` | `theta`, `r` | S² |
/// | `hemisphere` | none | S² |
/// | `tunnel` | `theta`, `r`, `eps` | S² |
/// | `tube` | `k`, `r` | S² |
/// | `file` | `path` | from file |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainSpec {
    /// Circular arc of angular width `beta`, symmetric about `e₁`.
    Arc { beta: f64 },
    /// `{x · e_θ > r}` with `e_θ = e₁ sin θ + e_N cos θ`.
    Cap { theta: f64, r: f64 },
    /// `{x_N > 0}`.
    Hemisphere,
    /// Two caps `D_{±θ,r}` joined by the strip `|x_{N−1}| < eps` through `e_N`.
    Tunnel { theta: f64, r: f64, eps: f64 },
    /// Geodesic neighbourhood of radius `r` of the great sphere `S^k`.
    Tube { k: usize, r: f64 },
    MeshFile { path: PathBuf },
}

impl DomainSpec {
    /// Ambient dimension `N`, when it is fixed by the preset.
    pub fn dim(&self) -> Option<usize> {
        match self {
            DomainSpec::Arc { .. } => Some(2),
            DomainSpec::MeshFile { .. } => None,
            _ => Some(3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        match *self {
            DomainSpec::Arc { beta } => {
                if !(beta > 0.0 && beta < 2.0 * PI) {
                    return bad(format!("beta out of (0,2π): {beta}"));
                }
            }
            DomainSpec::Cap { theta, r } => {
                check_theta(theta)?;
                if !(r > 0.0 && r < 1.0) {
                    return bad("r out of (0,1)".into());
                }
            }
            DomainSpec::Hemisphere => {}
            DomainSpec::Tunnel { theta, r, eps } => {
                let n = 3.0_f64;
                let theta_min = (1.0 / n.sqrt()).asin();
                if !(theta > theta_min && theta < FRAC_PI_2) {
                    return bad(format!("theta out of (arcsin(1/√N), π/2) = ({theta_min:.6}, {FRAC_PI_2:.6})"));
                }
                let r_theta = theta.cos().abs().max(theta.sin().abs());
                if !(r > r_theta && r < 1.0) {
                    return bad(format!("r out of (r_θ, 1) = ({r_theta:.6}, 1)"));
                }
                if !(eps > 0.0 && eps < 1.0) {
                    return bad("eps out of (0,1)".into());
                }
                let reach = (1.0 - r * r).sqrt();
                if eps >= reach {
                    return bad(format!(
                        "tunnel does not connect the caps: eps must be below √(1−r²) = {reach:.6}"
                    ));
                }
            }
            DomainSpec::Tube { k, r } => {
                // S² only: k ∈ {1, …, N−2}
                if k != 1 {
                    return bad(format!("k out of 1..=N-2 (N=3): {k}"));
                }
                if !(r > 0.0 && r < FRAC_PI_2) {
                    return bad("r out of (0,π/2)".into());
                }
            }
            DomainSpec::MeshFile { .. } => {}
        }
        Ok(())
    }

    /// Analytic `H_{N−1}(D)` where a closed form exists.
    pub fn exact_area(&self) -> Option<f64> {
        match *self {
            DomainSpec::Arc { beta } => Some(beta),
            DomainSpec::Cap { r, .. } => Some(2.0 * PI * (1.0 - r)),
            DomainSpec::Hemisphere => Some(2.0 * PI),
            DomainSpec::Tube { r, .. } => Some(4.0 * PI * r.sin()),
            DomainSpec::Tunnel { .. } | DomainSpec::MeshFile { .. } => None,
        }
    }

    /// Default test direction `e` for the boundary criterion: a unit vector
    /// that makes `u_e` odd under a symmetry of `D`.
    pub fn default_direction(&self) -> Vec<f64> {
        match self {
            DomainSpec::Arc { .. } => vec![0.0, 1.0],
            _ => vec![1.0, 0.0, 0.0],
        }
    }

    /// Whether the preset is rotationally symmetric about `e₃` (θ = 0 caps,
    /// the hemisphere and `k = 1` tubes), as required by the reduced torsion solve.
    pub fn is_axisymmetric(&self) -> bool {
        match *self {
            DomainSpec::Cap { theta, .. } => theta == 0.0,
            DomainSpec::Hemisphere | DomainSpec::Tube { .. } => true,
            _ => false,
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > -FRAC_PI_2 && theta < FRAC_PI_2) {
        return Err(Error::InvalidSpec("theta out of (-π/2,π/2)".into()));
    }
    Ok(())
}

fn parse_number(key: &str, raw: &str) -> Result<f64> {
    let (body, scale) = match raw.strip_suffix("deg") {
        Some(b) => (b, PI / 180.0),
        None => (raw, 1.0),
    };
    body.trim()
        .parse::<f64>()
        .map(|v| v * scale)
        .map_err(|_| Error::InvalidSpec(format!("bad value for {key}: {raw:?}")))
}

impl FromStr for DomainSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut kv: Vec<(String, String)> = Vec::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidSpec(format!("expected key=value, got {part:?}")))?;
            let k = k.trim().to_ascii_lowercase();
            if kv.iter().any(|(seen, _)| *seen == k) {
                return Err(Error::InvalidSpec(format!("duplicate key {k:?}")));
            }
            kv.push((k, v.trim().to_string()));
        }
        let get = |key: &str| -> Result<f64> {
            let raw = kv
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::InvalidSpec(format!("missing key {key} in {name} spec")))?;
            parse_number(key, raw)
        };
        let allowed: &[&str] = match name.to_ascii_lowercase().as_str() {
            "arc" => &["beta"],
            "cap" => &["theta", "r"],
            "hemisphere" => &[],
            "tunnel" => &["theta", "r", "eps"],
            "tube" => &["k", "r"],
            "file" | "mesh" => &["path"],
            other => return Err(Error::InvalidSpec(format!("unknown domain preset {other:?}"))),
        };
        if let Some((k, _)) = kv.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidSpec(format!("unknown key {k:?} for {name}")));
        }
        let spec = match name.to_ascii_lowercase().as_str() {
            "arc" => DomainSpec::Arc { beta: get("beta")? },
            "cap" => DomainSpec::Cap { theta: get("theta")?, r: get("r")? },
            "hemisphere" => DomainSpec::Hemisphere,
            "tunnel" => DomainSpec::Tunnel { theta: get("theta")?, r: get("r")?, eps: get("eps")? },
            "tube" => {
                let k = get("k")?;
                if k.fract() != 0.0 || k < 0.0 {
                    return Err(Error::InvalidSpec(format!("k must be a positive integer, got {k}")));
                }
                DomainSpec::Tube { k: k as usize, r: get("r")? }
            }
            _ => {
                let path = kv
                    .iter()
                    .find(|(k, _)| k == "path")
                    .map(|(_, v)| PathBuf::from(v))
                    .ok_or_else(|| Error::InvalidSpec("missing key path".into()))?;
                DomainSpec::MeshFile { path }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainSpec::Arc { beta } => write!(f, "arc:beta={beta}"),
            DomainSpec::Cap { theta, r } => write!(f, "cap:theta={theta},r={r}"),
            DomainSpec::Hemisphere => write!(f, "hemisphere"),
            DomainSpec::Tunnel { theta, r, eps } => write!(f, "tunnel:theta={theta},r={r},eps={eps}"),
            DomainSpec::Tube { k, r } => write!(f, "tube:k={k},r={r}"),
            DomainSpec::MeshFile { path } => write!(f, "file:path={}", path.display()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_presets() {
        assert_eq!("arc:beta=1.5".parse::<DomainSpec>().unwrap(), DomainSpec::Arc { beta: 1.5 });
        assert_eq!("tube:k=1,r=0.45".parse::<DomainSpec>().unwrap(), DomainSpec::Tube { k: 1, r: 0.45 });
        let t: DomainSpec = "tunnel:theta=50deg,r=0.85,eps=0.05".parse().unwrap();
        match t {
            DomainSpec::Tunnel { theta, .. } => assert!((theta - 50f64.to_radians()).abs() < 1e-15),
            _ => panic!(),
        }
        assert_eq!("hemisphere".parse::<DomainSpec>().unwrap(), DomainSpec::Hemisphere);
    }

    #[test]
    fn rejects_out_of_range() {
        let e = "cap:theta=0.1,r=2".parse::<DomainSpec>().unwrap_err();
        assert_eq!(e.to_string(), "r out of (0,1)");
        assert!("cap:theta=2,r=0.5".parse::<DomainSpec>().is_err());
        assert!("tube:k=2,r=0.3".parse::<DomainSpec>().is_err());
        // r below r_θ
        assert!("tunnel:theta=50deg,r=0.7,eps=0.05".parse::<DomainSpec>().is_err());
        // theta below arcsin(1/√3)
        assert!("tunnel:theta=0.5,r=0.95,eps=0.05".parse::<DomainSpec>().is_err());
        // eps wider than the caps
        assert!("tunnel:theta=50deg,r=0.85,eps=0.6".parse::<DomainSpec>().is_err());
        assert!("blob:r=1".parse::<DomainSpec>().is_err());
        assert!("cap:theta=0,r=0.5,x=1".parse::<DomainSpec>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in ["arc:beta=2", "cap:theta=0.3,r=0.5", "tube:k=1,r=0.4", "hemisphere"] {
            let spec: DomainSpec = s.parse().unwrap();
            assert_eq!(spec.to_string().parse::<DomainSpec>().unwrap(), spec);
        }
    }
}
