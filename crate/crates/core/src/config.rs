//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is optional
//! and defaults to [`SimConfig::default`]. Recognized keys:
//!
//! | key | meaning |
//! |---|---|
//! | `nx`, `ny`, `lx`, `ly` | grid cells and side lengths |
//! | `dt`, `t_end` | step and final time |
//! | `chi` | chemotactic sensitivity |
//! | `mass`, `u_shape`, `u_amplitude` | initial density |
//! | `v_base`, `v_shape`, `v_amplitude` | initial signal |
//! | `seed` | seed of `random_positive` shapes |
//! | `v_floor` | abort threshold for `min v` |
//! | `record_every` | steps between records |
//! | `checkpoint_every` | steps between state checkpoints, 0 for endpoints only |
//! | `linsolve_tol`, `max_linsolve_iter` | implicit solve settings |
//! | `upwind` | `true` for upwind face values of `u` |
//! | `a`, `b` | weights of the monitored functional |
//!
//! Shapes are `flat`, `const_plus_cos`, `gauss_bump` or `random_positive`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::field::Grid;
use crate::solver::{Profile, SimConfig};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub seed: u64,
    pub checkpoint_every: usize,
}

const KEYS: &[&str] = &[
    "nx",
    "ny",
    "lx",
    "ly",
    "dt",
    "t_end",
    "chi",
    "mass",
    "u_shape",
    "u_amplitude",
    "v_base",
    "v_shape",
    "v_amplitude",
    "seed",
    "v_floor",
    "record_every",
    "checkpoint_every",
    "linsolve_tol",
    "max_linsolve_iter",
    "upwind",
    "a",
    "b",
];

fn value<T: FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match map.get(key) {
        None => Ok(default),
        Some(s) => s.parse().map_err(|e: T::Err| Error::Config {
            key: key.to_string(),
            msg: format!("cannot parse `{s}`: {e}"),
        }),
    }
}

fn shape(map: &BTreeMap<String, String>, key: &str, default: Profile, seed: u64) -> Result<Profile> {
    match map.get(key) {
        None => Ok(match default {
            Profile::Shape(crate::field::Manufactured::RandomPositive { .. }) => {
                Profile::Shape(crate::field::Manufactured::RandomPositive { seed })
            }
            other => other,
        }),
        Some(s) => Profile::parse(s, seed).map_err(|e| Error::Config {
            key: key.to_string(),
            msg: e.to_string(),
        }),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_string(),
                msg: format!("line {} is not `key = value`", n + 1),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Config {
                    key: k.to_string(),
                    msg: "unknown key".into(),
                });
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config {
                    key: k.to_string(),
                    msg: "given twice".into(),
                });
            }
        }

        let d = RunConfig::default();
        let ds = &d.sim;
        let seed = value(&map, "seed", d.seed)?;
        let nx = value(&map, "nx", ds.grid.nx)?;
        let ny = value(&map, "ny", ds.grid.ny)?;
        let lx = value(&map, "lx", ds.grid.lx)?;
        let ly = value(&map, "ly", ds.grid.ly)?;
        let grid = Grid::new(nx, ny, lx, ly).map_err(|e| Error::Config {
            key: "nx".into(),
            msg: e.to_string(),
        })?;
        let mut init = ds.init;
        init.mass = value(&map, "mass", init.mass)?;
        init.u_profile = shape(&map, "u_shape", init.u_profile, seed)?;
        init.u_amplitude = value(&map, "u_amplitude", init.u_amplitude)?;
        init.v_base = value(&map, "v_base", init.v_base)?;
        init.v_profile = shape(&map, "v_shape", init.v_profile, seed)?;
        init.v_amplitude = value(&map, "v_amplitude", init.v_amplitude)?;
        if !(init.v_base > 0.0) {
            return Err(Error::Config {
                key: "v_base".into(),
                msg: format!("must be > 0, got {}", init.v_base),
            });
        }

        let sim = SimConfig {
            grid,
            dt: value(&map, "dt", ds.dt)?,
            t_end: value(&map, "t_end", ds.t_end)?,
            chi: value(&map, "chi", ds.chi)?,
            init,
            v_floor: value(&map, "v_floor", ds.v_floor)?,
            record_every: value(&map, "record_every", ds.record_every)?,
            linsolve_tol: value(&map, "linsolve_tol", ds.linsolve_tol)?,
            max_linsolve_iter: value(&map, "max_linsolve_iter", ds.max_linsolve_iter)?,
            upwind: value(&map, "upwind", ds.upwind)?,
            a: value(&map, "a", ds.a)?,
            b: value(&map, "b", ds.b)?,
            stability_check_every: ds.stability_check_every,
        };
        sim.validate()?;
        Ok(Self {
            sim,
            seed,
            checkpoint_every: value(&map, "checkpoint_every", d.checkpoint_every)?,
        })
    }

    /// Canonical text form; `parse(to_text())` reproduces the configuration.
    pub fn to_text(&self) -> String {
        let s = &self.sim;
        let i = &s.init;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("nx", s.grid.nx.to_string());
        put("ny", s.grid.ny.to_string());
        put("lx", format!("{:?}", s.grid.lx));
        put("ly", format!("{:?}", s.grid.ly));
        put("dt", format!("{:?}", s.dt));
        put("t_end", format!("{:?}", s.t_end));
        put("chi", format!("{:?}", s.chi));
        put("mass", format!("{:?}", i.mass));
        put("u_shape", i.u_profile.name().to_string());
        put("u_amplitude", format!("{:?}", i.u_amplitude));
        put("v_base", format!("{:?}", i.v_base));
        put("v_shape", i.v_profile.name().to_string());
        put("v_amplitude", format!("{:?}", i.v_amplitude));
        put("seed", self.seed.to_string());
        put("v_floor", format!("{:?}", s.v_floor));
        put("record_every", s.record_every.to_string());
        put("checkpoint_every", self.checkpoint_every.to_string());
        put("linsolve_tol", format!("{:?}", s.linsolve_tol));
        put("max_linsolve_iter", s.max_linsolve_iter.to_string());
        put("upwind", s.upwind.to_string());
        put("a", format!("{:?}", s.a));
        put("b", format!("{:?}", s.b));
        out
    }
}
