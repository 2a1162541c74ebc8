//! Grid surrogate for the verified assumption region over `(p0, c, d)`: a
//! cell belongs to the region iff noise-free episodes started from all
//! eight of its corners are safe under every listed steepness.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::collect::run_episode;
use super::controller::ControllerSpec;
use super::{McParams, C_RANGE, D_RANGE, NOMINAL_STEEPNESS, P0_RANGE};
use crate::error::{Error, Result};
use crate::monitors::{AssumptionPredicate, HyperBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    /// Cells per dimension over `(p0, c, d)`.
    pub resolution: [usize; 3],
    pub p0_range: (f64, f64),
    pub c_range: (f64, f64),
    pub d_range: (f64, f64),
    /// Steepness values every corner must be safe under.
    pub steepness: Vec<f64>,
}

impl Default for RegionConfig {
    fn default() -> Self {
        RegionConfig {
            resolution: [20, 10, 10],
            p0_range: P0_RANGE,
            c_range: C_RANGE,
            d_range: D_RANGE,
            steepness: vec![NOMINAL_STEEPNESS],
        }
    }
}

impl RegionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution.iter().any(|&n| n < 2) {
            return Err(Error::Config("region resolution must be at least 2 per dimension".into()));
        }
        for (name, (lo, hi)) in self.ranges().iter().zip(["p0", "c", "d"]).map(|(r, n)| (n, *r)) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("invalid {name} range [{lo}, {hi}]")));
            }
        }
        if self.steepness.is_empty() || self.steepness.iter().any(|z| !(*z > 0.0)) {
            return Err(Error::Config("region steepness list must hold positive values".into()));
        }
        Ok(())
    }

    pub fn ranges(&self) -> [(f64, f64); 3] {
        [self.p0_range, self.c_range, self.d_range]
    }

    fn axis(&self, dim: usize, i: usize) -> f64 {
        let (lo, hi) = self.ranges()[dim];
        let n = self.resolution[dim];
        if i == n {
            hi
        } else {
            lo + (hi - lo) * i as f64 / n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionRegion {
    pub config: RegionConfig,
    /// Description of the controller the region was built for.
    pub controller: String,
    /// Marks the region as a simulation-based stand-in for a verified one.
    pub surrogate: bool,
    /// Row-major over `(p0, c, d)` cell indices.
    pub cells: Vec<bool>,
}

impl AssumptionRegion {
    /// Builds the region by simulating every grid corner without noise.
    pub fn build(config: &RegionConfig, controller: &ControllerSpec) -> Result<Self> {
        config.validate()?;
        let safe = |p0: f64, c: f64, d: f64| -> Result<bool> {
            for &z in &config.steepness {
                let mut ctl = controller.build()?;
                if !run_episode(ctl.as_mut(), p0, McParams { z, c, d }, || (0.0, 0.0)).safe {
                    return Ok(false);
                }
            }
            Ok(true)
        };
        Self::from_corner_oracle(config, controller.describe(), safe)
    }

    /// Builds the region from an arbitrary corner safety oracle.
    pub fn from_corner_oracle(
        config: &RegionConfig,
        controller: String,
        mut safe: impl FnMut(f64, f64, f64) -> Result<bool>,
    ) -> Result<Self> {
        config.validate()?;
        let [np, nc, nd] = config.resolution;
        let corner_index = |i: usize, j: usize, k: usize| (i * (nc + 1) + j) * (nd + 1) + k;
        let mut corners = vec![false; (np + 1) * (nc + 1) * (nd + 1)];
        for i in 0..=np {
            for j in 0..=nc {
                for k in 0..=nd {
                    corners[corner_index(i, j, k)] = safe(config.axis(0, i), config.axis(1, j), config.axis(2, k))?;
                }
            }
        }
        let mut cells = Vec::with_capacity(np * nc * nd);
        for i in 0..np {
            for j in 0..nc {
                for k in 0..nd {
                    let all = (0..8).all(|b| corners[corner_index(i + (b & 1), j + ((b >> 1) & 1), k + (b >> 2))]);
                    cells.push(all);
                }
            }
        }
        Ok(AssumptionRegion {
            config: config.clone(),
            controller,
            surrogate: true,
            cells,
        })
    }

    fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        let [_, nc, nd] = self.config.resolution;
        (i * nc + j) * nd + k
    }

    pub fn cell_included(&self, i: usize, j: usize, k: usize) -> bool {
        self.cells[self.cell_index(i, j, k)]
    }

    pub fn cell_box(&self, i: usize, j: usize, k: usize) -> HyperBox {
        let c = &self.config;
        HyperBox {
            lo: vec![c.axis(0, i), c.axis(1, j), c.axis(2, k)],
            hi: vec![c.axis(0, i + 1), c.axis(1, j + 1), c.axis(2, k + 1)],
        }
    }

    /// Closed-cell membership: points on a shared face belong to the region
    /// if either neighbouring cell does.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != 3 {
            return false;
        }
        let mut candidates: [Vec<usize>; 3] = Default::default();
        for dim in 0..3 {
            let (lo, hi) = self.config.ranges()[dim];
            let n = self.config.resolution[dim];
            if !(lo <= x[dim] && x[dim] <= hi) {
                return false;
            }
            let f = (x[dim] - lo) / (hi - lo) * n as f64;
            let i = (f.floor() as usize).min(n - 1);
            candidates[dim].push(i);
            // neighbours whose closed extent may also hold the point
            if i > 0 && x[dim] <= self.config.axis(dim, i) {
                candidates[dim].push(i - 1);
            }
            if i + 1 < n && x[dim] >= self.config.axis(dim, i + 1) {
                candidates[dim].push(i + 1);
            }
        }
        candidates[0].iter().any(|&i| {
            candidates[1]
                .iter()
                .any(|&j| candidates[2].iter().any(|&k| self.cell_included(i, j, k) && self.cell_box(i, j, k).contains(x)))
        })
    }

    pub fn volume_fraction(&self) -> f64 {
        self.cells.iter().filter(|c| **c).count() as f64 / self.cells.len() as f64
    }

    pub fn domain(&self) -> HyperBox {
        let r = self.config.ranges();
        HyperBox {
            lo: r.iter().map(|x| x.0).collect(),
            hi: r.iter().map(|x| x.1).collect(),
        }
    }

    pub fn predicate(&self) -> AssumptionPredicate {
        let [np, nc, nd] = self.config.resolution;
        let mut boxes = Vec::new();
        for i in 0..np {
            for j in 0..nc {
                for k in 0..nd {
                    if self.cell_included(i, j, k) {
                        boxes.push(self.cell_box(i, j, k));
                    }
                }
            }
        }
        AssumptionPredicate {
            domain: self.domain(),
            boxes,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let region: AssumptionRegion = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let [np, nc, nd] = region.config.resolution;
        if region.cells.len() != np * nc * nd {
            return Err(Error::Shape(format!(
                "region cache has {} cells, resolution implies {}",
                region.cells.len(),
                np * nc * nd
            )));
        }
        Ok(region)
    }

    /// Reuses the cached region when it was built for the same grid and
    /// controller; otherwise builds and rewrites the cache.
    pub fn load_or_build(config: &RegionConfig, controller: &ControllerSpec, cache: &Path) -> Result<Self> {
        if let Ok(r) = Self::load(cache) {
            if r.config == *config && r.controller == controller.describe() {
                return Ok(r);
            }
        }
        let r = Self::build(config, controller)?;
        r.save(cache)?;
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::collect::run_episode;

    fn small() -> RegionConfig {
        RegionConfig {
            resolution: [4, 3, 2],
            ..Default::default()
        }
    }

    #[test]
    fn trivial_oracles() {
        let none = AssumptionRegion::from_corner_oracle(&small(), "x".into(), |_, _, _| Ok(false)).unwrap();
        assert_eq!(none.volume_fraction(), 0.0);
        assert!(!none.contains(&[-0.5, 0.0, 0.0]));
        let all = AssumptionRegion::from_corner_oracle(&small(), "x".into(), |_, _, _| Ok(true)).unwrap();
        assert_eq!(all.volume_fraction(), 1.0);
        assert!(all.contains(&[-0.6, -1.0, -0.01]) && all.contains(&[-0.4, 1.0, 0.02]));
        assert!(!all.contains(&[-0.39, 0.0, 0.0]));
    }

    #[test]
    fn one_bad_corner_removes_adjacent_cells() {
        let cfg = RegionConfig { resolution: [2, 2, 2], ..Default::default() };
        let r = AssumptionRegion::from_corner_oracle(&cfg, "x".into(), |p, c, d| Ok(!(p == -0.5 && c == 0.0 && d == -0.01))).unwrap();
        // interior corner in p and c, boundary in d: four cells with k = 0 drop
        assert_eq!(r.cells.iter().filter(|c| !**c).count(), 4);
        assert!(r.contains(&[-0.45, 0.5, 0.015]));
        assert!(!r.contains(&[-0.45, 0.5, -0.005]));
        // a face shared by an included and an excluded cell is included
        assert!(r.contains(&[-0.45, 0.5, 0.005]));
    }

    #[test]
    fn predicate_agrees_with_contains() {
        let r = AssumptionRegion::build(&small(), &ControllerSpec::default()).unwrap();
        let pred = r.predicate();
        let mut rng = crate::data::RngSeed::new(1).rng();
        use rand::Rng;
        for _ in 0..2000 {
            let x = [rng.random_range(-0.6..=-0.4), rng.random_range(-1.0..=1.0), rng.random_range(-0.01..=0.02)];
            assert_eq!(r.contains(&x), pred.contains(&x));
        }
    }

    #[test]
    fn membership_replays_corner_simulations() {
        let cfg = small();
        let spec = ControllerSpec::default();
        let r = AssumptionRegion::build(&cfg, &spec).unwrap();
        let [np, nc, nd] = cfg.resolution;
        for i in 0..np {
            for j in 0..nc {
                for k in 0..nd {
                    let b = r.cell_box(i, j, k);
                    let mut replay = true;
                    for bits in 0..8 {
                        let x: Vec<f64> = (0..3).map(|d| if bits >> d & 1 == 1 { b.hi[d] } else { b.lo[d] }).collect();
                        for &z in &cfg.steepness {
                            let mut ctl = spec.build().unwrap();
                            replay &= run_episode(ctl.as_mut(), x[0], McParams { z, c: x[1], d: x[2] }, || (0.0, 0.0)).safe;
                        }
                    }
                    assert_eq!(r.cell_included(i, j, k), replay, "cell {i},{j},{k}");
                }
            }
        }
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("region.json");
        let cfg = small();
        let spec = ControllerSpec::default();
        let a = AssumptionRegion::load_or_build(&cfg, &spec, &path).unwrap();
        assert!(path.exists());
        let b = AssumptionRegion::load_or_build(&cfg, &spec, &path).unwrap();
        assert_eq!(a, b);
        assert!(b.surrogate);
        std::fs::write(&path, "{\"config\":").unwrap();
        assert!(AssumptionRegion::load(&path).is_err());
        assert_eq!(AssumptionRegion::load_or_build(&cfg, &spec, &path).unwrap(), a);
    }

    #[test]
    fn rejects_coarse_grid() {
        let cfg = RegionConfig { resolution: [1, 10, 10], ..Default::default() };
        assert!(matches!(AssumptionRegion::build(&cfg, &ControllerSpec::default()), Err(Error::Config(_))));
    }
}
