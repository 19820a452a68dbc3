//! Declarative map descriptions for configuration files.

use serde::{Deserialize, Serialize};

use super::{
    affine_horseshoe, boundary_morse_smale, bump_push, compose_all, connector_shear, exterior_dissipation, identity,
    integrable_twist, strip_shear, vertical_contraction, AffineHorseshoeParams, BoundaryParams, BumpProfile,
    ConnectorParams, Direction, LiftedMap, Strip,
};
use crate::cover::AnnulusPoint;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::theorem_b::{build_dissipative, build_dissipative_connector, build_f1, build_f2, build_final, PipelineParams};

/// Stage of the low-entropy construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    F1,
    F2,
    Final,
}

/// A map family with its parameters, or a combination of maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Twist,
    Identity,
    Boundary(BoundaryParams),
    Connector(ConnectorParams),
    Shear {
        strips: Vec<Strip>,
    },
    Bump {
        center: (f64, f64),
        radius: f64,
        amplitude: f64,
        direction: Direction,
    },
    VerticalContraction {
        n: u32,
    },
    Exterior {
        strength: f64,
        width: f64,
    },
    AffineHorseshoe(AffineHorseshoeParams),
    TheoremB {
        stage: Stage,
        #[serde(default)]
        params: PipelineParams,
    },
    Dissipative {
        #[serde(default)]
        params: PipelineParams,
    },
    /// Composition, outermost map first.
    Compose {
        maps: Vec<MapSpec>,
    },
    Power {
        map: Box<MapSpec>,
        k: usize,
    },
    DeckShift {
        map: Box<MapSpec>,
        k: i64,
    },
}

impl MapSpec {
    /// Shorthand names accepted on the command line.
    pub const NAMES: &'static [&'static str] = &["twist", "identity", "horseshoe", "f1", "f2", "theoremB", "dissipative"];

    pub fn from_name(name: &str) -> Result<Self> {
        let params = PipelineParams::default();
        Ok(match name {
            "twist" => MapSpec::Twist,
            "identity" => MapSpec::Identity,
            "horseshoe" | "affine_horseshoe" => MapSpec::AffineHorseshoe(AffineHorseshoeParams::default()),
            "f1" => MapSpec::TheoremB { stage: Stage::F1, params },
            "f2" => MapSpec::TheoremB { stage: Stage::F2, params },
            "theoremB" | "f" => MapSpec::TheoremB { stage: Stage::Final, params },
            "dissipative" => MapSpec::Dissipative { params },
            other => {
                return Err(Error::InvalidParams(format!(
                    "unknown map '{other}'; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }

    pub fn build<S: Scalar>(&self) -> Result<LiftedMap<S>> {
        Ok(match self {
            MapSpec::Twist => integrable_twist(),
            MapSpec::Identity => identity(),
            MapSpec::Boundary(p) => boundary_morse_smale(p)?,
            MapSpec::Connector(p) => connector_shear(p)?,
            MapSpec::Shear { strips } => strip_shear(strips)?,
            MapSpec::Bump {
                center,
                radius,
                amplitude,
                direction,
            } => {
                let c = AnnulusPoint::new(S::lit(center.0), S::lit(center.1));
                bump_push(&BumpProfile::new(c, S::lit(*radius), S::lit(*amplitude))?, *direction)
            }
            MapSpec::VerticalContraction { n } => vertical_contraction(*n)?,
            MapSpec::Exterior { strength, width } => exterior_dissipation(S::lit(*strength), S::lit(*width))?,
            MapSpec::AffineHorseshoe(p) => affine_horseshoe(p)?,
            MapSpec::TheoremB { stage, params } => {
                params.validate()?;
                let f1 = build_f1::<S>(params)?.map;
                if *stage == Stage::F1 {
                    return Ok(f1);
                }
                let f2 = build_f2(&f1, params)?.map;
                if *stage == Stage::F2 {
                    return Ok(f2);
                }
                build_final(&f2, params)?.map
            }
            MapSpec::Dissipative { params } => {
                params.validate()?;
                let f1 = build_f1::<S>(params)?.map;
                build_dissipative(&build_dissipative_connector(&f1, params)?, params.dissipative.n)?
            }
            MapSpec::Compose { maps } => {
                let built = maps.iter().map(|m| m.build::<S>()).collect::<Result<Vec<_>>>()?;
                compose_all(&built).ok_or_else(|| Error::InvalidParams("empty composition".into()))?
            }
            MapSpec::Power { map, k } => {
                if *k == 0 {
                    return Err(Error::InvalidParams("power must be >= 1".into()));
                }
                map.build::<S>()?.power(*k)
            }
            MapSpec::DeckShift { map, k } => map.build::<S>()?.deck_shifted(*k),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::CoverPoint;

    #[test]
    fn toml_round_trip() {
        let src = r#"
family = "compose"
[[maps]]
family = "vertical_contraction"
n = 8
[[maps]]
family = "twist"
"#;
        let spec: MapSpec = toml::from_str(src).unwrap();
        let f = spec.build::<f64>().unwrap();
        let q = f.eval(CoverPoint::new(0.1, 0.5));
        assert!((q.x - 0.6).abs() < 1e-15 && (q.y - 0.5).abs() < 1e-15);
        let back: MapSpec = toml::from_str(&toml::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = toml::from_str::<MapSpec>("family = \"vertical_contraction\"\nn = 8\nm = 1\n").unwrap_err();
        assert!(e.to_string().contains("unknown field"), "{e}");
        assert!(toml::from_str::<MapSpec>("family = \"affine_horseshoe\"\nleft = 0.2\nright = 0.8\nimage_left = 0.1\nimage_right = 1.9\ncontraction = 0.3\noffset = 0.3\nfoo = 1\n").is_err());
    }

    #[test]
    fn names_resolve() {
        for n in MapSpec::NAMES {
            MapSpec::from_name(n).unwrap().build::<f64>().unwrap();
        }
        assert!(MapSpec::from_name("cat").is_err());
    }

    #[test]
    fn rebuilding_from_serialized_params_is_bit_identical() {
        let spec = MapSpec::from_name("theoremB").unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let again: MapSpec = serde_json::from_str(&json).unwrap();
        let (f, g) = (spec.build::<f64>().unwrap(), again.build::<f64>().unwrap());
        for k in 0..500 {
            let p = CoverPoint::new(k as f64 * 0.013, -0.2 + k as f64 * 0.0029);
            let (a, b) = (f.eval(p), g.eval(p));
            assert_eq!((a.x.to_bits(), a.y.to_bits()), (b.x.to_bits(), b.y.to_bits()));
        }
    }
}
