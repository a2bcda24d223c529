//! User profiling: Lloyd's k-means on normalized load profiles, greedy
//! one-dimensional clustering on MCI values, and MCI trajectory assembly
//! across a capacity sweep.

use rand::Rng;
use rand::SeedableRng;
use serde::Serialize;
use thiserror::Error;

use crate::dispatch::{compute_mci, MciRecord};
use crate::model::UserProfile;
use crate::parametric::SweepResult;

#[derive(Debug, Error)]
pub enum ProfilingError {
    #[error("user {user} has zero total load")]
    ZeroLoad { user: String },
    #[error("k must be between 1 and the number of profiles ({n}), got {k}")]
    InvalidK { k: usize, n: usize },
    #[error("user {user} references bus {bus}, which the sweep does not have")]
    BusMismatch { user: String, bus: usize },
    #[error("user {user} has {found} load entries, expected {expected}")]
    LoadLengthMismatch { user: String, expected: usize, found: usize },
    #[error(transparent)]
    Dispatch(#[from] crate::dispatch::DispatchError),
}

/// Which norm backs profile normalization. The L1 norm is the default so the
/// clustering weights match the MCI load weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Norm {
    #[default]
    L1,
    L2,
}

/// Normalizes a load profile to unit L1 norm (components sum to one).
pub fn normalize_profile(user: &UserProfile) -> Result<Vec<f64>, ProfilingError> {
    normalize_profile_with(user, Norm::L1)
}

pub fn normalize_profile_with(user: &UserProfile, norm: Norm) -> Result<Vec<f64>, ProfilingError> {
    let denom = match norm {
        Norm::L1 => user.load.iter().sum::<f64>(),
        Norm::L2 => user.load.iter().map(|v| v * v).sum::<f64>().sqrt(),
    };
    if denom <= 0.0 {
        return Err(ProfilingError::ZeroLoad { user: user.user_id.clone() });
    }
    Ok(user.load.iter().map(|v| v / denom).collect())
}

/// Cluster representative: a centroid profile for k-means, an MCI interval
/// for the greedy method.
#[derive(Debug, Clone, Serialize)]
pub enum Representative {
    Centroid(Vec<f64>),
    Interval { lo: f64, hi: f64 },
}

/// A cluster of users. Every input belongs to exactly one cluster.
#[derive(Debug, Clone, Serialize)]
pub struct Cluster {
    pub label: usize,
    pub member_ids: Vec<String>,
    pub representative: Representative,
}

/// Lloyd's k-means over unit-sum profiles with deterministic farthest-point
/// initialization. Empty clusters are repaired by reseeding from the point
/// farthest from its centroid.
pub fn kmeans(
    profiles: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<Vec<Vec<usize>>, ProfilingError> {
    let n = profiles.len();
    if k == 0 || k > n {
        return Err(ProfilingError::InvalidK { k, n });
    }
    let dim = profiles[0].len();
    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };

    // Farthest-point initialization, first center drawn from the seed.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = vec![profiles[rng.random_range(0..n)].clone()];
    while centers.len() < k {
        let far = (0..n)
            .map(|i| {
                let d = centers.iter().map(|c| dist2(&profiles[i], c)).fold(f64::INFINITY, f64::min);
                (i, d)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap();
        centers.push(profiles[far].clone());
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..max_iter.max(1) {
        // Assign to the nearest center; ties break to the lowest label.
        let mut changed = false;
        for (i, p) in profiles.iter().enumerate() {
            let best = (0..k)
                .map(|c| (c, dist2(p, &centers[c])))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .map(|(c, _)| c)
                .unwrap();
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        // Recompute centroids; reseed empty clusters from the farthest point.
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; dim]; k];
        for (i, p) in profiles.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, v) in sums[assignment[i]].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .map(|i| (i, dist2(&profiles[i], &centers[assignment[i]])))
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap();
                centers[c] = profiles[far].clone();
                assignment[far] = c;
                changed = true;
            } else {
                for (j, s) in sums[c].iter().enumerate() {
                    centers[c][j] = s / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut clusters = vec![Vec::new(); k];
    for (i, &c) in assignment.iter().enumerate() {
        clusters[c].push(i);
    }
    Ok(clusters)
}

/// Within-cluster sum of squared distances to the centroids.
pub fn within_cluster_ss(profiles: &[Vec<f64>], clusters: &[Vec<usize>]) -> f64 {
    let dim = profiles.first().map(|p| p.len()).unwrap_or(0);
    let mut total = 0.0;
    for members in clusters {
        if members.is_empty() {
            continue;
        }
        let mut centroid = vec![0.0; dim];
        for &i in members {
            for (c, v) in centroid.iter_mut().zip(&profiles[i]) {
                *c += v;
            }
        }
        for c in centroid.iter_mut() {
            *c /= members.len() as f64;
        }
        for &i in members {
            total += centroid
                .iter()
                .zip(&profiles[i])
                .map(|(c, v)| (c - v) * (c - v))
                .sum::<f64>();
        }
    }
    total
}

/// Clusters users by normalized load profile and returns labelled clusters
/// with centroid representatives.
pub fn cluster_users(
    users: &[UserProfile],
    k: usize,
    seed: u64,
    max_iter: usize,
    norm: Norm,
) -> Result<Vec<Cluster>, ProfilingError> {
    let profiles: Vec<Vec<f64>> = users
        .iter()
        .map(|u| normalize_profile_with(u, norm))
        .collect::<Result<_, _>>()?;
    let index_clusters = kmeans(&profiles, k, seed, max_iter)?;
    let dim = profiles.first().map(|p| p.len()).unwrap_or(0);
    Ok(index_clusters
        .into_iter()
        .enumerate()
        .map(|(label, members)| {
            let mut centroid = vec![0.0; dim];
            for &i in &members {
                for (c, v) in centroid.iter_mut().zip(&profiles[i]) {
                    *c += v;
                }
            }
            if !members.is_empty() {
                for c in centroid.iter_mut() {
                    *c /= members.len() as f64;
                }
            }
            Cluster {
                label,
                member_ids: members.iter().map(|&i| users[i].user_id.clone()).collect(),
                representative: Representative::Centroid(centroid),
            }
        })
        .collect())
}

/// Greedy one-dimensional clustering: sort ascending, then repeatedly take
/// the maximal run of values within `radius` of the run's first element.
/// Runs in O(n log n); values exactly at the boundary join the current run.
pub fn greedy_1d_cluster(values: &[(String, f64)], radius: f64) -> Vec<Cluster> {
    let mut sorted: Vec<(String, f64)> = values.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut clusters = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let anchor = sorted[start].1;
        let end = sorted.partition_point(|v| v.1 <= anchor + radius);
        clusters.push(Cluster {
            label: clusters.len(),
            member_ids: sorted[start..end].iter().map(|v| v.0.clone()).collect(),
            representative: Representative::Interval { lo: anchor, hi: sorted[end - 1].1 },
        });
        start = end;
    }
    clusters
}

/// Minimal number of radius-`radius` intervals covering the values;
/// dynamic-programming oracle used to verify the greedy method.
pub fn min_interval_cover(values: &[f64], radius: f64) -> usize {
    if values.is_empty() {
        return 0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // dp[i] = minimal clusters covering the first i values.
    let mut dp = vec![usize::MAX; n + 1];
    dp[0] = 0;
    for i in 1..=n {
        for j in 0..i {
            if sorted[i - 1] - sorted[j] <= radius && dp[j] != usize::MAX {
                dp[i] = dp[i].min(dp[j] + 1);
            }
        }
    }
    dp[n]
}

/// Per-cluster MCI curves across a sweep, split into the storage-invariant
/// component and the deviation.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub cluster: usize,
    pub bus_id: usize,
    /// Representative MCI per grid point.
    pub mci: Vec<f64>,
    /// Storage-invariant component (constant across the grid).
    pub cmci: f64,
    /// Deviation `mci - cmci` per grid point.
    pub vmci: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySet {
    pub grid: Vec<f64>,
    pub entries: Vec<Trajectory>,
}

/// Builds per-cluster MCI trajectories over the sweep grid. Members of a
/// cluster are grouped by bus (a profile's MCI depends on where it lives);
/// each group is represented by the centroid of its normalized profiles,
/// whose MCI equals the member average.
pub fn mci_trajectories(
    sweep: &SweepResult,
    users: &[UserProfile],
    clusters: &[Cluster],
) -> Result<TrajectorySet, ProfilingError> {
    let by_id: std::collections::HashMap<&str, &UserProfile> =
        users.iter().map(|u| (u.user_id.as_str(), u)).collect();
    for user in users {
        if user.bus_id == 0 || user.bus_id > sweep.n_buses {
            return Err(ProfilingError::BusMismatch {
                user: user.user_id.clone(),
                bus: user.bus_id,
            });
        }
        if user.load.len() != sweep.horizon {
            return Err(ProfilingError::LoadLengthMismatch {
                user: user.user_id.clone(),
                expected: sweep.horizon,
                found: user.load.len(),
            });
        }
    }

    let mut entries = Vec::new();
    for cluster in clusters {
        let mut by_bus: std::collections::BTreeMap<usize, Vec<&UserProfile>> = Default::default();
        for id in &cluster.member_ids {
            if let Some(user) = by_id.get(id.as_str()) {
                by_bus.entry(user.bus_id).or_default().push(user);
            }
        }
        for (bus_id, members) in by_bus {
            let mut centroid = vec![0.0; sweep.horizon];
            for user in &members {
                let normalized = normalize_profile(user)?;
                for (c, v) in centroid.iter_mut().zip(&normalized) {
                    *c += v;
                }
            }
            for c in centroid.iter_mut() {
                *c /= members.len() as f64;
            }
            let bus = bus_id - 1;
            let mci: Vec<f64> = sweep
                .prices
                .iter()
                .map(|s| centroid.iter().zip(&s.p[bus]).map(|(w, p)| w * p).sum())
                .collect();
            // The storage-invariant component is grid-independent; take it
            // from the first point.
            let cmci: f64 = sweep.prices[0]
                .clmp[bus]
                .iter()
                .zip(&centroid)
                .map(|(c, w)| c * w)
                .sum();
            let vmci: Vec<f64> = mci.iter().map(|m| m - cmci).collect();
            entries.push(Trajectory { cluster: cluster.label, bus_id, mci, cmci, vmci });
        }
    }
    Ok(TrajectorySet { grid: sweep.grid.clone(), entries })
}

/// Greedy clusterings of user MCIs at every grid point, with a flow map
/// linking clusters at adjacent points through shared members.
#[derive(Debug, Clone, Serialize)]
pub struct GroupDynamics {
    pub grid: Vec<f64>,
    pub clusterings: Vec<Vec<Cluster>>,
    /// `(from_point, from_cluster, to_cluster, shared_members)` edges between
    /// adjacent grid points.
    pub flows: Vec<(usize, usize, usize, usize)>,
    /// Cluster count per grid point (observed to shrink, not asserted).
    pub counts: Vec<usize>,
}

/// Computes per-user MCI at each sweep point and clusters them greedily.
pub fn group_dynamics(
    sweep: &SweepResult,
    users: &[UserProfile],
    radius: f64,
) -> Result<GroupDynamics, ProfilingError> {
    let mut clusterings = Vec::with_capacity(sweep.grid.len());
    for schedule in &sweep.prices {
        let mcis: Vec<(String, f64)> = users
            .iter()
            .map(|u| -> Result<(String, f64), ProfilingError> {
                let record: MciRecord = compute_mci(schedule, u)?;
                Ok((u.user_id.clone(), record.mci))
            })
            .collect::<Result<_, _>>()?;
        clusterings.push(greedy_1d_cluster(&mcis, radius));
    }
    let mut flows = Vec::new();
    for i in 0..clusterings.len().saturating_sub(1) {
        for a in &clusterings[i] {
            let a_set: std::collections::HashSet<&String> = a.member_ids.iter().collect();
            for b in &clusterings[i + 1] {
                let shared = b.member_ids.iter().filter(|id| a_set.contains(id)).count();
                if shared > 0 {
                    flows.push((i, a.label, b.label, shared));
                }
            }
        }
    }
    let counts = clusterings.iter().map(|c| c.len()).collect();
    Ok(GroupDynamics { grid: sweep.grid.clone(), clusterings, flows, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::DispatchCase;
    use crate::model::{PoolInstance, QuadraticCost};
    use crate::parametric::{sweep, SweepConfig};
    use approx::assert_abs_diff_eq;

    fn user(id: &str, bus: usize, load: &[f64]) -> UserProfile {
        UserProfile { user_id: id.into(), bus_id: bus, load: load.to_vec() }
    }

    #[test]
    fn normalization_golden_values() {
        let alice = user("alice", 1, &[4.0, 16.0]);
        assert_eq!(normalize_profile(&alice).unwrap(), vec![0.2, 0.8]);
        let even = user("even", 1, &[5.0, 5.0]);
        assert_eq!(normalize_profile(&even).unwrap(), vec![0.5, 0.5]);
        let zero = user("zero", 1, &[0.0, 0.0]);
        assert!(matches!(normalize_profile(&zero), Err(ProfilingError::ZeroLoad { .. })));
        let l2 = normalize_profile_with(&user("l2", 1, &[3.0, 4.0]), Norm::L2).unwrap();
        assert_abs_diff_eq!(l2[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(l2[1], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn kmeans_trivial_cases() {
        let profiles = vec![vec![0.5, 0.5]; 6];
        let clusters = kmeans(&profiles, 1, 0, 50).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].len(), 6);

        let distinct: Vec<Vec<f64>> =
            (0..4).map(|i| vec![i as f64 / 10.0, 1.0 - i as f64 / 10.0]).collect();
        let clusters = kmeans(&distinct, 4, 0, 50).unwrap();
        let mut sizes: Vec<usize> = clusters.iter().map(|c| c.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![1, 1, 1, 1]);
        assert!(within_cluster_ss(&distinct, &clusters) < 1e-12);

        assert!(matches!(kmeans(&distinct, 0, 0, 10), Err(ProfilingError::InvalidK { .. })));
        assert!(matches!(kmeans(&distinct, 5, 0, 10), Err(ProfilingError::InvalidK { .. })));
    }

    #[test]
    fn kmeans_recovers_two_archetypes_and_matches_brute_force() {
        // 100 noisy draws from two unit-sum archetypes.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(9);
        let arch_a = [0.7, 0.1, 0.1, 0.1];
        let arch_b = [0.1, 0.1, 0.1, 0.7];
        let mut profiles = Vec::new();
        for i in 0..100 {
            let base = if i % 2 == 0 { arch_a } else { arch_b };
            let mut p: Vec<f64> = base
                .iter()
                .map(|v| f64::max(v + rng.random_range(-0.02..0.02), 1e-3))
                .collect();
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= total);
            profiles.push(p);
        }
        let clusters = kmeans(&profiles, 2, 1, 100).unwrap();
        // Each cluster matches the parity split.
        for members in &clusters {
            let parities: std::collections::HashSet<usize> =
                members.iter().map(|i| i % 2).collect();
            assert_eq!(parities.len(), 1, "clusters should separate the archetypes");
        }

        // Exhaustive 2-partition oracle on a 10-profile subsample.
        let sub: Vec<Vec<f64>> = profiles.iter().take(10).cloned().collect();
        let sub_clusters = kmeans(&sub, 2, 1, 100).unwrap();
        let kmeans_ss = within_cluster_ss(&sub, &sub_clusters);
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << 10) - 1 {
            let a: Vec<usize> = (0..10).filter(|i| mask >> i & 1 == 1).collect();
            let b: Vec<usize> = (0..10).filter(|i| mask >> i & 1 == 0).collect();
            best = best.min(within_cluster_ss(&sub, &[a, b]));
        }
        assert!(
            kmeans_ss <= best + 1e-9,
            "k-means WCSS {kmeans_ss} vs exhaustive optimum {best}"
        );
    }

    #[test]
    fn kmeans_objective_non_increasing_over_iterations() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
        let profiles: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let mut p: Vec<f64> = (0..5).map(|_| rng.random_range(0.01..1.0)).collect();
                let total: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= total);
                p
            })
            .collect();
        let mut prev = f64::INFINITY;
        for iters in 1..8 {
            let clusters = kmeans(&profiles, 4, 7, iters).unwrap();
            let ss = within_cluster_ss(&profiles, &clusters);
            assert!(ss <= prev + 1e-9, "objective rose from {prev} to {ss} at iter {iters}");
            prev = ss;
        }
    }

    #[test]
    fn greedy_cluster_hand_trace() {
        let values = vec![
            ("u1".to_string(), 10.0),
            ("u2".to_string(), 10.4),
            ("u3".to_string(), 12.0),
        ];
        let clusters = greedy_1d_cluster(&values, 0.5);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].member_ids, vec!["u1", "u2"]);
        assert_eq!(clusters[1].member_ids, vec!["u3"]);
        match &clusters[0].representative {
            Representative::Interval { lo, hi } => {
                assert_abs_diff_eq!(*lo, 10.0);
                assert_abs_diff_eq!(*hi, 10.4);
            }
            _ => panic!("expected interval"),
        }
    }

    #[test]
    fn greedy_cluster_edges() {
        assert!(greedy_1d_cluster(&[], 1.0).is_empty());
        // Radius spanning the range gives a single cluster.
        let values: Vec<(String, f64)> =
            (0..5).map(|i| (format!("u{i}"), i as f64)).collect();
        assert_eq!(greedy_1d_cluster(&values, 4.0).len(), 1);
        // Boundary values join the current run.
        let tied = vec![
            ("a".to_string(), 1.0),
            ("b".to_string(), 1.5),
            ("c".to_string(), 1.500000001),
        ];
        let clusters = greedy_1d_cluster(&tied, 0.5);
        assert_eq!(clusters[0].member_ids.len(), 2);
        assert_eq!(clusters.len(), 2);
    }

    #[test]
    fn greedy_matches_dp_oracle_on_small_instances() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(13);
        for _ in 0..200 {
            let n = rng.random_range(1..=12);
            let values: Vec<(String, f64)> = (0..n)
                .map(|i| (format!("u{i}"), rng.random_range(0.0..10.0)))
                .collect();
            let radius = rng.random_range(0.1..4.0);
            let clusters = greedy_1d_cluster(&values, radius);
            // Span property.
            for c in &clusters {
                match c.representative {
                    Representative::Interval { lo, hi } => assert!(hi - lo <= radius + 1e-12),
                    _ => unreachable!(),
                }
            }
            // Partition property.
            let total: usize = clusters.iter().map(|c| c.member_ids.len()).sum();
            assert_eq!(total, n);
            // Minimal count against the DP oracle.
            let raw: Vec<f64> = values.iter().map(|v| v.1).collect();
            assert_eq!(clusters.len(), min_interval_cover(&raw, radius));
        }
    }

    fn two_period_sweep() -> SweepResult {
        let pool = PoolInstance {
            cost: QuadraticCost::new(1.0, 0.0, 0.0),
            demand: vec![10.0, 20.0],
            horizon: 2,
        };
        sweep(DispatchCase::Pool(&pool), &[0.0, 10.0], &SweepConfig::default()).unwrap()
    }

    #[test]
    fn trajectories_match_golden_mci_values() {
        let s = two_period_sweep();
        let users = vec![user("alice", 1, &[4.0, 16.0]), user("bob", 1, &[6.0, 4.0])];
        let clusters = vec![
            Cluster {
                label: 0,
                member_ids: vec!["alice".into()],
                representative: Representative::Centroid(vec![0.2, 0.8]),
            },
            Cluster {
                label: 1,
                member_ids: vec!["bob".into()],
                representative: Representative::Centroid(vec![0.6, 0.4]),
            },
        ];
        let set = mci_trajectories(&s, &users, &clusters).unwrap();
        assert_eq!(set.entries.len(), 2);
        let alice = &set.entries[0];
        assert_abs_diff_eq!(alice.mci[0], 18.0, epsilon = 1e-6);
        assert_abs_diff_eq!(alice.mci[1], 15.0, epsilon = 1e-6);
        assert_abs_diff_eq!(alice.cmci, 18.0, epsilon = 1e-6);
        assert_abs_diff_eq!(alice.vmci[0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(alice.vmci[1], -3.0, epsilon = 1e-6);
        let bob = &set.entries[1];
        assert_abs_diff_eq!(bob.mci[0], 14.0, epsilon = 1e-6);
        assert_abs_diff_eq!(bob.mci[1], 15.0, epsilon = 1e-6);
        assert_abs_diff_eq!(bob.vmci[1], 1.0, epsilon = 1e-6);
        // Pointwise identity.
        for e in &set.entries {
            for (m, v) in e.mci.iter().zip(&e.vmci) {
                assert_abs_diff_eq!(*m, e.cmci + v, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn trajectories_reject_unknown_bus() {
        let s = two_period_sweep();
        let users = vec![user("ghost", 7, &[1.0, 1.0])];
        let clusters = vec![Cluster {
            label: 0,
            member_ids: vec!["ghost".into()],
            representative: Representative::Centroid(vec![0.5, 0.5]),
        }];
        assert!(matches!(
            mci_trajectories(&s, &users, &clusters),
            Err(ProfilingError::BusMismatch { .. })
        ));
    }

    #[test]
    fn group_dynamics_golden() {
        let s = two_period_sweep();
        let users = vec![user("alice", 1, &[4.0, 16.0]), user("bob", 1, &[6.0, 4.0])];
        let dynamics = group_dynamics(&s, &users, 0.5).unwrap();
        // MCIs 18 and 14 split at E=0; both 15 at E=10.
        assert_eq!(dynamics.counts, vec![2, 1]);
        // Flow map: both clusters merge into the single one.
        assert_eq!(dynamics.flows.len(), 2);
        for (_, _, to, shared) in &dynamics.flows {
            assert_eq!(*to, 0);
            assert_eq!(*shared, 1);
        }
        // Single user is one cluster everywhere.
        let solo = group_dynamics(&s, &users[..1], 0.5).unwrap();
        assert_eq!(solo.counts, vec![1, 1]);
        // Infinite radius merges everyone.
        let all = group_dynamics(&s, &users, f64::INFINITY).unwrap();
        assert_eq!(all.counts, vec![1, 1]);
    }

    #[test]
    fn pool_mcis_stay_within_bounds() {
        let s = two_period_sweep();
        let users = vec![
            user("alice", 1, &[4.0, 16.0]),
            user("bob", 1, &[6.0, 4.0]),
            user("solo-peak", 1, &[0.0, 3.0]),
            user("solo-off", 1, &[3.0, 0.0]),
        ];
        for (i, schedule) in s.prices.iter().enumerate() {
            let (ub, lb) = s.bounds_global[i];
            for u in &users {
                let mci = compute_mci(schedule, u).unwrap().mci;
                assert!(mci <= ub + 1e-9 && mci >= lb - 1e-9);
            }
        }
    }

    #[test]
    fn cluster_users_produces_partition() {
        let users: Vec<UserProfile> = (0..9)
            .map(|i| user(&format!("u{i}"), 1, &[1.0 + i as f64, 2.0, 10.0 - i as f64]))
            .collect();
        let clusters = cluster_users(&users, 3, 5, 50, Norm::L1).unwrap();
        let mut seen = std::collections::HashSet::new();
        for c in &clusters {
            for id in &c.member_ids {
                assert!(seen.insert(id.clone()), "user {id} appears twice");
            }
        }
        assert_eq!(seen.len(), 9);
    }
}
