//! Replica catalogue and site-to-site network model.
//!
//! The topology is a flat graph of direct links. Two sites without a link
//! cannot exchange data; a site always reaches itself for free.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ids::SiteId;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("no network route between sites {0} and {1}")]
    NoRoute(SiteId, SiteId),
    #[error("file {0} has no replica reachable from site {1}")]
    Unreachable(String, SiteId),
    #[error("unknown logical file {0}")]
    UnknownFile(String),
    #[error("file {0}: {1}")]
    InvalidFile(String, String),
    #[error("link {0}-{1}: {2}")]
    InvalidLink(SiteId, SiteId, String),
}

/// Replica selection objective; the other metric breaks ties.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Objective {
    MinTime,
    MinCost,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogicalFile<T> {
    pub name: String,
    pub size_mb: T,
    pub replicas: BTreeSet<SiteId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkLink<T> {
    pub a: SiteId,
    pub b: SiteId,
    pub bandwidth_mb_s: T,
    pub price_per_mb: T,
}

/// How data moves between two sites.
#[derive(Clone, Debug, PartialEq)]
pub enum Route<'a, T> {
    Local,
    Link(&'a NetworkLink<T>),
}

impl<T: Scalar> Route<'_, T> {
    pub fn transfer_time(&self, size_mb: &T) -> T {
        match self {
            Route::Local => T::zero(),
            Route::Link(l) => size_mb.clone() / l.bandwidth_mb_s.clone(),
        }
    }

    pub fn transfer_cost(&self, size_mb: &T) -> T {
        match self {
            Route::Local => T::zero(),
            Route::Link(l) => size_mb.clone() * l.price_per_mb.clone(),
        }
    }

    pub fn is_local(&self) -> bool {
        matches!(self, Route::Local)
    }
}

/// Where one input comes from and what fetching it costs.
#[derive(Clone, Debug, PartialEq)]
pub struct DataOverhead<T> {
    pub source_site: SiteId,
    pub transfer_time: T,
    pub transfer_cost: T,
}

/// Overheads of all inputs of a job, summed. Transfers run back to back.
#[derive(Clone, Debug, PartialEq)]
pub struct JobOverhead<T> {
    pub transfer_time: T,
    pub transfer_cost: T,
    /// Megabytes that crossed a network link.
    pub moved_mb: T,
    pub per_file: Vec<DataOverhead<T>>,
}

impl<T: Scalar> JobOverhead<T> {
    pub fn zero() -> Self {
        Self {
            transfer_time: T::zero(),
            transfer_cost: T::zero(),
            moved_mb: T::zero(),
            per_file: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct DataGrid<T> {
    files: BTreeMap<String, LogicalFile<T>>,
    links: BTreeMap<(SiteId, SiteId), NetworkLink<T>>,
}

fn key(a: SiteId, b: SiteId) -> (SiteId, SiteId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl<T: Scalar> DataGrid<T> {
    pub fn new() -> Self {
        Self {
            files: BTreeMap::new(),
            links: BTreeMap::new(),
        }
    }

    pub fn add_file(&mut self, file: LogicalFile<T>) -> Result<(), DataError> {
        if file.replicas.is_empty() {
            return Err(DataError::InvalidFile(file.name, "no replicas".into()));
        }
        if file.size_mb <= T::zero() {
            return Err(DataError::InvalidFile(file.name, "size must be positive".into()));
        }
        if self.files.contains_key(&file.name) {
            return Err(DataError::InvalidFile(file.name, "declared twice".into()));
        }
        self.files.insert(file.name.clone(), file);
        Ok(())
    }

    pub fn add_link(&mut self, link: NetworkLink<T>) -> Result<(), DataError> {
        let k = key(link.a, link.b);
        if link.a == link.b {
            return Err(DataError::InvalidLink(link.a, link.b, "intra-site links are implicit".into()));
        }
        if link.bandwidth_mb_s <= T::zero() {
            return Err(DataError::InvalidLink(link.a, link.b, "bandwidth must be positive".into()));
        }
        if link.price_per_mb < T::zero() {
            return Err(DataError::InvalidLink(link.a, link.b, "price must be non-negative".into()));
        }
        if self.links.contains_key(&k) {
            return Err(DataError::InvalidLink(link.a, link.b, "duplicate link".into()));
        }
        self.links.insert(k, link);
        Ok(())
    }

    pub fn file(&self, name: &str) -> Option<&LogicalFile<T>> {
        self.files.get(name)
    }

    pub fn files(&self) -> impl Iterator<Item = &LogicalFile<T>> {
        self.files.values()
    }

    pub fn route(&self, from: SiteId, to: SiteId) -> Result<Route<'_, T>, DataError> {
        if from == to {
            return Ok(Route::Local);
        }
        self.links
            .get(&key(from, to))
            .map(Route::Link)
            .ok_or(DataError::NoRoute(from, to))
    }

    pub fn transfer_time(&self, size_mb: &T, from: SiteId, to: SiteId) -> Result<T, DataError> {
        Ok(self.route(from, to)?.transfer_time(size_mb))
    }

    pub fn transfer_cost(&self, size_mb: &T, from: SiteId, to: SiteId) -> Result<T, DataError> {
        Ok(self.route(from, to)?.transfer_cost(size_mb))
    }

    /// Cheapest or fastest replica of `file` for delivery to `dest`.
    pub fn best_replica(&self, file: &LogicalFile<T>, dest: SiteId, objective: Objective) -> Result<DataOverhead<T>, DataError> {
        let mut best: Option<DataOverhead<T>> = None;
        // replicas iterate in ascending SiteId, so strict improvement keeps the lowest id on full ties
        for &src in &file.replicas {
            let Ok(route) = self.route(src, dest) else { continue };
            let cand = DataOverhead {
                source_site: src,
                transfer_time: route.transfer_time(&file.size_mb),
                transfer_cost: route.transfer_cost(&file.size_mb),
            };
            let better = match &best {
                None => true,
                Some(b) => {
                    let (p, s, bp, bs) = match objective {
                        Objective::MinTime => (&cand.transfer_time, &cand.transfer_cost, &b.transfer_time, &b.transfer_cost),
                        Objective::MinCost => (&cand.transfer_cost, &cand.transfer_time, &b.transfer_cost, &b.transfer_time),
                    };
                    p < bp || (p == bp && s < bs)
                }
            };
            if better {
                best = Some(cand);
            }
        }
        best.ok_or_else(|| DataError::Unreachable(file.name.clone(), dest))
    }

    /// Sum of per-file best replicas for staging `inputs` at `dest`.
    pub fn data_overhead<S: AsRef<str>>(&self, inputs: &[S], dest: SiteId, objective: Objective) -> Result<JobOverhead<T>, DataError> {
        let mut total = JobOverhead::zero();
        for name in inputs {
            let name = name.as_ref();
            let file = self.files.get(name).ok_or_else(|| DataError::UnknownFile(name.to_string()))?;
            let o = self.best_replica(file, dest, objective)?;
            if o.source_site != dest {
                total.moved_mb = total.moved_mb + file.size_mb.clone();
            }
            total.transfer_time = total.transfer_time + o.transfer_time.clone();
            total.transfer_cost = total.transfer_cost + o.transfer_cost.clone();
            total.per_file.push(o);
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn grid() -> DataGrid<f64> {
        // site 0 = dest, 1 = A, 2 = B
        let mut g = DataGrid::new();
        g.add_link(NetworkLink { a: SiteId(1), b: SiteId(0), bandwidth_mb_s: 10.0, price_per_mb: 0.01 }).unwrap();
        g.add_link(NetworkLink { a: SiteId(0), b: SiteId(2), bandwidth_mb_s: 100.0, price_per_mb: 0.02 }).unwrap();
        g
    }

    fn file(name: &str, size: f64, sites: &[usize]) -> LogicalFile<f64> {
        LogicalFile { name: name.into(), size_mb: size, replicas: sites.iter().map(|s| SiteId(*s)).collect() }
    }

    #[test]
    fn linear_transfer_model() {
        let g = grid();
        assert_eq!(g.transfer_time(&300.0, SiteId(1), SiteId(0)), Ok(30.0));
        assert_eq!(g.transfer_time(&300.0, SiteId(2), SiteId(0)), Ok(3.0));
        assert_eq!(g.transfer_time(&300.0, SiteId(0), SiteId(0)), Ok(0.0));
        assert_eq!(g.transfer_cost(&300.0, SiteId(1), SiteId(0)), Ok(3.0));
        assert_eq!(g.transfer_cost(&300.0, SiteId(2), SiteId(0)), Ok(6.0));
        assert_eq!(g.transfer_cost(&300.0, SiteId(0), SiteId(0)), Ok(0.0));
        assert_eq!(g.transfer_time(&1.0, SiteId(1), SiteId(2)), Err(DataError::NoRoute(SiteId(1), SiteId(2))));
    }

    #[test]
    fn replica_choice_depends_on_objective() {
        let g = grid();
        let f = file("f", 300.0, &[1, 2]);
        let t = g.best_replica(&f, SiteId(0), Objective::MinTime).unwrap();
        assert_eq!((t.source_site, t.transfer_time, t.transfer_cost), (SiteId(2), 3.0, 6.0));
        let c = g.best_replica(&f, SiteId(0), Objective::MinCost).unwrap();
        assert_eq!((c.source_site, c.transfer_time, c.transfer_cost), (SiteId(1), 30.0, 3.0));
        let local = g.best_replica(&file("g", 300.0, &[0, 1, 2]), SiteId(0), Objective::MinTime).unwrap();
        assert_eq!((local.source_site, local.transfer_time, local.transfer_cost), (SiteId(0), 0.0, 0.0));
    }

    #[test]
    fn unreachable_replica_is_an_error() {
        let g = grid();
        let f = file("f", 1.0, &[2]);
        assert!(matches!(g.best_replica(&f, SiteId(1), Objective::MinCost), Err(DataError::Unreachable(..))));
    }

    #[test]
    fn overhead_sums_per_file() {
        let mut g = grid();
        g.add_file(file("a", 300.0, &[2])).unwrap();
        g.add_file(file("b", 300.0, &[1])).unwrap();
        let none: [&str; 0] = [];
        assert_eq!(g.data_overhead(&none, SiteId(0), Objective::MinTime).unwrap(), JobOverhead::zero());
        let o = g.data_overhead(&["a", "b"], SiteId(0), Objective::MinTime).unwrap();
        assert_eq!((o.transfer_time, o.transfer_cost, o.moved_mb), (33.0, 9.0, 600.0));
        assert!(matches!(g.data_overhead(&["zzz"], SiteId(0), Objective::MinTime), Err(DataError::UnknownFile(_))));
    }

    #[test]
    fn catalogue_rejects_bad_declarations() {
        let mut g = grid();
        assert!(g.add_file(file("e", 1.0, &[])).is_err());
        assert!(g.add_file(file("z", 0.0, &[1])).is_err());
        assert!(g.add_link(NetworkLink { a: SiteId(2), b: SiteId(0), bandwidth_mb_s: 1.0, price_per_mb: 0.0 }).is_err());
        assert!(g.add_link(NetworkLink { a: SiteId(3), b: SiteId(3), bandwidth_mb_s: 1.0, price_per_mb: 0.0 }).is_err());
    }

    fn random_grid(links: &[(usize, usize, u32, u32)]) -> DataGrid<f64> {
        let mut g = DataGrid::new();
        for &(a, b, bw, price) in links {
            if a != b {
                let _ = g.add_link(NetworkLink { a: SiteId(a), b: SiteId(b), bandwidth_mb_s: f64::from(bw), price_per_mb: f64::from(price) / 100.0 });
            }
        }
        g
    }

    proptest! {
        #[test]
        fn objectives_dominate_each_other(
            links in proptest::collection::vec((0usize..8, 0usize..8, 1u32..200, 0u32..50), 0..20),
            replicas in proptest::collection::btree_set(0usize..8, 1..6),
            dest in 0usize..8,
            size in 1u32..1000,
        ) {
            let g = random_grid(&links);
            let f = LogicalFile { name: "f".into(), size_mb: f64::from(size), replicas: replicas.iter().map(|s| SiteId(*s)).collect() };
            if let (Ok(c), Ok(t)) = (g.best_replica(&f, SiteId(dest), Objective::MinCost), g.best_replica(&f, SiteId(dest), Objective::MinTime)) {
                prop_assert!(c.transfer_cost <= t.transfer_cost);
                prop_assert!(t.transfer_time <= c.transfer_time);
            }
        }

        #[test]
        fn adding_a_replica_never_hurts(
            links in proptest::collection::vec((0usize..8, 0usize..8, 1u32..200, 0u32..50), 0..20),
            replicas in proptest::collection::btree_set(0usize..8, 1..5),
            extra in 0usize..8,
            dest in 0usize..8,
        ) {
            let g = random_grid(&links);
            let f = LogicalFile { name: "f".into(), size_mb: 64.0, replicas: replicas.iter().map(|s| SiteId(*s)).collect() };
            let mut more = f.clone();
            more.replicas.insert(SiteId(extra));
            for obj in [Objective::MinTime, Objective::MinCost] {
                if let Ok(before) = g.best_replica(&f, SiteId(dest), obj) {
                    let after = g.best_replica(&more, SiteId(dest), obj).unwrap();
                    let (b, a) = match obj {
                        Objective::MinTime => (before.transfer_time, after.transfer_time),
                        Objective::MinCost => (before.transfer_cost, after.transfer_cost),
                    };
                    prop_assert!(a <= b);
                }
            }
        }
    }
}
