//! Two ready-made systems: pedestrians with vocal signals in a room with
//! exits, and immune cells against disease carriers mediated by a signal.

use std::collections::BTreeMap;

use crate::config::{
    ActivityProfile, ActivitySection, DomainSpec, InitialSpec, IntegratorSection, KernelSpec, Mode, Origin,
    OutputSection, Region, SensitivitySection, SpaceSection, SplittingName, SystemConfig, SystemSection,
    TransportSection, VelocitySection, VelocitySpec,
};
use crate::error::{Error, Result, Scale};
use crate::geometry::Weighting;
use crate::integrator::Stepper;
use crate::kernels::{KernelSet, Pairing};
use crate::scalar::Scalar;
use crate::state::{Boundary, ExitSegment, Side};

pub const PRESETS: [&str; 2] = ["crowd", "immune"];

/// Default parameters of a preset, in a fixed order.
pub fn preset_parameters(name: &str) -> Result<&'static [(&'static str, f64)]> {
    match name {
        "crowd" => Ok(CROWD),
        "immune" => Ok(IMMUNE),
        other => Err(Error::config(format!(
            "unknown preset '{other}'; valid presets: {}",
            PRESETS.join(", ")
        ))),
    }
}

const CROWD: &[(&str, f64)] = &[
    ("nx", 12.0),
    ("ny", 12.0),
    ("cell_size", 1.0),
    ("exit_first", 4.0),
    ("exit_last", 7.0),
    ("directions", 8.0),
    ("v_max", 1.0),
    ("nu", 4.0),
    ("nw", 4.0),
    ("dt", 0.2),
    ("t_end", 10.0),
    ("output_stride", 5.0),
    // FS perception sector and SFS reach
    ("view_half_angle_deg", 60.0),
    ("view_radius", 2.5),
    ("signal_radius", 1.5),
    // pedestrian-pedestrian alignment
    ("alignment_rate", 1.0),
    ("alignment", 0.3),
    ("imitation", 0.5),
    ("contagion", 0.2),
    // signals steering pedestrians
    ("signal_influence", 0.5),
    ("steering", 1.0),
    ("exit_bias", 1.0),
    ("avoidance", 1.0),
    // pedestrians raising signal intensity
    ("signal_response", 0.5),
    ("signal_relaxation", 0.5),
    ("signal_rho_ref", 1.0),
    // signal generation and decay
    ("signal_generation", 0.2),
    ("signal_decay", 0.1),
    // initial crowd block and background signal
    ("crowd_density", 1.0),
    ("crowd_x0", 1.0),
    ("crowd_x1", 6.0),
    ("crowd_y0", 3.0),
    ("crowd_y1", 9.0),
    ("crowd_activity", 0.6),
    ("crowd_activity_spread", 0.15),
    ("signal_background", 0.05),
];

const IMMUNE: &[(&str, f64)] = &[
    ("nu", 8.0),
    ("nw", 4.0),
    ("dt", 0.01),
    ("t_end", 5.0),
    ("output_stride", 10.0),
    // consensus within each FS
    ("consensus_rate", 1.0),
    ("consensus", 0.3),
    // immune-carrier encounters
    ("encounter_rate", 1.0),
    ("kill_rate", 1.0),
    ("activation", 0.3),
    ("activation_rho_ref", 0.5),
    ("immune_growth", 0.2),
    // carrier proliferation p / (1 + saturation rho)
    ("carrier_proliferation", 0.5),
    ("saturation", 1.0),
    // signal tracks carriers, immune activity tracks signal
    ("signal_response", 1.0),
    ("signal_relaxation", 0.5),
    ("signal_rho_ref", 0.5),
    ("signal_influence", 0.5),
    ("signal_consensus", 0.5),
    // initial populations
    ("immune_density", 1.0),
    ("immune_activity", 0.3),
    ("carrier_density", 0.5),
    ("signal_density", 1.0),
    ("signal_activity", 0.1),
];

/// Preset as a system configuration.
pub fn preset_config(name: &str, overrides: &BTreeMap<String, f64>) -> Result<SystemConfig> {
    let defaults = preset_parameters(name)?;
    let mut p: BTreeMap<&str, f64> = defaults.iter().copied().collect();
    for (k, v) in overrides {
        match p.get_mut(k.as_str()) {
            Some(slot) => *slot = *v,
            None => {
                let keys: Vec<&str> = defaults.iter().map(|(k, _)| *k).collect();
                return Err(Error::config(format!(
                    "unknown parameter '{k}' for preset {name}; valid keys: {}",
                    keys.join(", ")
                )));
            }
        }
    }
    let get = |k: &str| p[k];
    let count = |k: &str| -> Result<usize> {
        let v = p[k];
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::config(format!(
                "preset parameter '{k}' must be a non-negative integer (got {v})"
            )))
        }
    };
    match name {
        "crowd" => crowd(&get, &count),
        _ => immune(&get, &count),
    }
}

/// Preset configuration plus its validated kernel table.
pub fn build_preset<T: Scalar>(name: &str, overrides: &BTreeMap<String, f64>) -> Result<(SystemConfig, KernelSet<T>)> {
    let cfg = preset_config(name, overrides)?;
    let (fs, sfs) = cfg.grids::<T>()?;
    let kernels = cfg.kernel_set(&fs, &sfs)?;
    kernels.validate(&fs, &sfs)?;
    cfg.validate()?;
    Ok((cfg, kernels))
}

fn integrator(get: &dyn Fn(&str) -> f64, count: &dyn Fn(&str) -> Result<usize>) -> Result<IntegratorSection> {
    Ok(IntegratorSection {
        dt: get("dt"),
        t_end: get("t_end"),
        splitting: SplittingName::Lie,
        stepper: Stepper::Heun,
        negativity_tolerance: 1e-10,
        output_stride: count("output_stride")?.max(1),
    })
}

fn crowd(get: &dyn Fn(&str) -> f64, count: &dyn Fn(&str) -> Result<usize>) -> Result<SystemConfig> {
    let (nx, ny) = (count("nx")?, count("ny")?);
    let h = get("cell_size");
    let ped = [0, 0];
    let kernels = vec![
        KernelSpec::rate(Pairing::FsFs, ped, "constant", &[("alpha0", get("alignment_rate"))]),
        KernelSpec::transition(
            Pairing::FsFs,
            ped,
            "velocity-alignment",
            &[
                ("lambda", get("alignment")),
                ("lambda_activity", get("imitation")),
                ("mu", get("contagion")),
            ],
        ),
        KernelSpec::rate(Pairing::FsSfs, ped, "constant", &[("alpha0", get("signal_influence"))]),
        KernelSpec::transition(
            Pairing::FsSfs,
            ped,
            "exit-steering",
            &[
                ("strength", get("steering")),
                ("exit_bias", get("exit_bias")),
                ("avoidance", get("avoidance")),
            ],
        ),
        KernelSpec::rate(Pairing::SfsFs, ped, "constant", &[("alpha0", get("signal_response"))]),
        KernelSpec::transition(
            Pairing::SfsFs,
            ped,
            "intensity-relaxation",
            &[("rate", get("signal_relaxation")), ("rho_ref", get("signal_rho_ref"))],
        ),
        KernelSpec::proliferation(
            Scale::Sfs,
            ped,
            Some("activity-gated"),
            Some("constant"),
            &[("p", get("signal_generation")), ("l", get("signal_decay"))],
        ),
    ];
    let mut initial = vec![InitialSpec {
        scale: Scale::Fs,
        subsystem: 0,
        density: get("crowd_density"),
        region: Some(Region {
            x: [get("crowd_x0"), get("crowd_x1")],
            y: [get("crowd_y0"), get("crowd_y1")],
        }),
        heading: None,
        activity: ActivityProfile::Gaussian {
            mean: get("crowd_activity"),
            std: get("crowd_activity_spread"),
        },
    }];
    if get("signal_background") != 0.0 {
        initial.push(InitialSpec {
            scale: Scale::Sfs,
            subsystem: 0,
            density: get("signal_background"),
            region: None,
            heading: None,
            activity: ActivityProfile::Uniform,
        });
    }
    Ok(SystemConfig {
        system: SystemSection {
            n: 1,
            m: 1,
            mode: Mode::Spatial,
        },
        space: SpaceSection {
            lx: h * nx as f64,
            ly: h * ny as f64,
            nx,
            ny,
            boundary: Boundary::Absorbing,
            exits: vec![ExitSegment {
                side: Side::East,
                first: count("exit_first")?,
                last: count("exit_last")?,
            }],
        },
        velocity: VelocitySection {
            directions: count("directions")?,
            speeds: 1,
            v_max: get("v_max"),
            measure: 1.0,
            rest: false,
            sfs: Some(VelocitySpec {
                rest: true,
                ..VelocitySpec::default()
            }),
        },
        activity: ActivitySection {
            nu: count("nu")?,
            nw: count("nw")?,
            ..ActivitySection::default()
        },
        sensitivity: SensitivitySection {
            fs: DomainSpec {
                half_angle_deg: get("view_half_angle_deg"),
                radius: get("view_radius"),
                weighting: Weighting::UniformNormalized,
            },
            sfs: DomainSpec {
                half_angle_deg: 180.0,
                radius: get("signal_radius"),
                weighting: Weighting::UniformNormalized,
            },
        },
        transport: TransportSection::default(),
        integrator: integrator(get, count)?,
        kernels,
        initial,
        output: OutputSection::default(),
        origin: Origin::default(),
    })
}

fn immune(get: &dyn Fn(&str) -> f64, count: &dyn Fn(&str) -> Result<usize>) -> Result<SystemConfig> {
    const IMMUNE_CELLS: usize = 0;
    const CARRIERS: usize = 1;
    let mut kernels = Vec::new();
    for i in [IMMUNE_CELLS, CARRIERS] {
        kernels.push(KernelSpec::rate(
            Pairing::FsFs,
            [i, i],
            "constant",
            &[("alpha0", get("consensus_rate"))],
        ));
        kernels.push(KernelSpec::transition(
            Pairing::FsFs,
            [i, i],
            "activity-consensus",
            &[("mu", get("consensus"))],
        ));
    }
    let meet = [("alpha0", get("encounter_rate"))];
    kernels.extend([
        // immune cells activate on meeting carriers and proliferate
        KernelSpec::rate(Pairing::FsFs, [IMMUNE_CELLS, CARRIERS], "constant", &meet),
        KernelSpec::transition(
            Pairing::FsFs,
            [IMMUNE_CELLS, CARRIERS],
            "intensity-relaxation",
            &[("rate", get("activation")), ("rho_ref", get("activation_rho_ref"))],
        ),
        KernelSpec::proliferation(
            Scale::Fs,
            [IMMUNE_CELLS, CARRIERS],
            Some("constant"),
            None,
            &[("p", get("immune_growth"))],
        ),
        // carriers are destroyed in proportion to immune activity
        KernelSpec::rate(Pairing::FsFs, [CARRIERS, IMMUNE_CELLS], "constant", &meet),
        KernelSpec::transition(Pairing::FsFs, [CARRIERS, IMMUNE_CELLS], "identity", &[]),
        KernelSpec::proliferation(
            Scale::Fs,
            [CARRIERS, IMMUNE_CELLS],
            None,
            Some("activity-gated"),
            &[("l", get("kill_rate"))],
        ),
        // saturated carrier proliferation
        KernelSpec::proliferation(
            Scale::Fs,
            [CARRIERS, CARRIERS],
            Some("density-saturated"),
            None,
            &[("p", get("carrier_proliferation")), ("sigma", get("saturation"))],
        ),
        // the signal tracks carrier density
        KernelSpec::rate(
            Pairing::SfsFs,
            [0, CARRIERS],
            "constant",
            &[("alpha0", get("signal_response"))],
        ),
        KernelSpec::transition(
            Pairing::SfsFs,
            [0, CARRIERS],
            "intensity-relaxation",
            &[("rate", get("signal_relaxation")), ("rho_ref", get("signal_rho_ref"))],
        ),
        // immune activity follows the signal
        KernelSpec::rate(
            Pairing::FsSfs,
            [IMMUNE_CELLS, 0],
            "constant",
            &[("alpha0", get("signal_influence"))],
        ),
        KernelSpec::transition(
            Pairing::FsSfs,
            [IMMUNE_CELLS, 0],
            "activity-consensus",
            &[("mu", get("signal_consensus"))],
        ),
    ]);
    let population = |scale, subsystem, density, activity| InitialSpec {
        scale,
        subsystem,
        density,
        region: None,
        heading: None,
        activity,
    };
    let initial = vec![
        population(
            Scale::Fs,
            IMMUNE_CELLS,
            get("immune_density"),
            ActivityProfile::Gaussian {
                mean: get("immune_activity"),
                std: 0.15,
            },
        ),
        population(Scale::Fs, CARRIERS, get("carrier_density"), ActivityProfile::Uniform),
        population(
            Scale::Sfs,
            0,
            get("signal_density"),
            ActivityProfile::Node {
                value: get("signal_activity"),
            },
        ),
    ];
    Ok(SystemConfig {
        system: SystemSection {
            n: 2,
            m: 1,
            mode: Mode::Homogeneous,
        },
        space: SpaceSection::default(),
        velocity: VelocitySection::default(),
        activity: ActivitySection {
            nu: count("nu")?,
            nw: count("nw")?,
            ..ActivitySection::default()
        },
        sensitivity: SensitivitySection::default(),
        transport: TransportSection::default(),
        integrator: integrator(get, count)?,
        kernels,
        initial,
        output: OutputSection::default(),
        origin: Origin::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Setup;
    use crate::integrator::{run_homogeneous_with, run_with};

    fn set(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn unknown_keys_list_valid_ones() {
        let err = preset_config("immune", &set(&[("kil_rate", 1.0)]))
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("kil_rate") && err.contains("kill_rate") && err.contains("saturation"),
            "{err}"
        );
        assert!(preset_config("swarm", &BTreeMap::new()).is_err());
    }

    #[test]
    fn crowd_runs_ten_steps() {
        let (cfg, _) = build_preset::<f64>("crowd", &set(&[("t_end", 2.0)])).unwrap();
        let Setup::Spatial(s) = cfg.build::<f64>().unwrap() else {
            panic!()
        };
        assert_eq!(s.integrator.steps(), 10);
        run_with(&s.model, &s.scheme, &s.integrator, s.initial, |_| Ok(())).unwrap();
    }

    #[test]
    fn immune_carriers_constant_without_birth_or_death() {
        let (cfg, _) =
            build_preset::<f64>("immune", &set(&[("kill_rate", 0.0), ("carrier_proliferation", 0.0)])).unwrap();
        let Setup::Homogeneous(s) = cfg.build::<f64>().unwrap() else {
            panic!()
        };
        let m0 = s.initial.f.total_mass(1, &s.model.fs);
        run_homogeneous_with(&s.model, &s.integrator, s.initial, |st| {
            let m = st.f.total_mass(1, &s.model.fs);
            assert!((m - m0).abs() <= 1e-12 * m0, "{m} vs {m0}");
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn preset_manifest_round_trips() {
        for name in PRESETS {
            let cfg = preset_config(name, &BTreeMap::new()).unwrap();
            let text = cfg.to_toml().unwrap();
            let again = SystemConfig::from_toml_str(&text).unwrap();
            assert_eq!(again.to_toml().unwrap(), text, "{name}");
        }
    }
}
