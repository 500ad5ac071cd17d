//! Counterfactual datasets in which mail votes counted for candidate 2 in the
//! red districts are reassigned to candidate 1.
//!
//! The number of votes to move is split across red districts proportionally
//! to a chosen base using largest-remainder rounding. A district can give up
//! at most its candidate-2 mail votes; the surplus from capped districts is
//! shared out again among the others by the same rule.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::election_data::{DistrictRecord, ElectionDataset};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error(
        "cannot move {requested} votes: red districts only have {available} candidate-2 mail votes \
         (short by {})",
        requested - available
    )]
    Capacity { requested: u64, available: u64 },
    #[error("district {0:?} is not in the dataset")]
    UnknownDistrict(String),
}

/// What the allocation is proportional to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocationBase {
    /// Each district's total mail votes.
    #[default]
    MailTotal,
    /// Each district's candidate-2 mail votes.
    CandidateTwoMail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioResult {
    pub modified: ElectionDataset,
    pub votes_moved_per_district: BTreeMap<String, u64>,
    pub total_moved: u64,
    /// Candidate 1's national total minus candidate 2's, after the move.
    pub resulting_margin: i64,
    pub base: AllocationBase,
}

/// Splits `total` into integer parts proportional to `weights` by the
/// largest-remainder method. Ties on the remainder go to the smaller `keys`
/// entry. `weights` must not all be zero when `total > 0`.
fn largest_remainder(total: u64, weights: &[u64], keys: &[&str]) -> Vec<u64> {
    let weight_sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if total == 0 || weight_sum == 0 {
        return vec![0; weights.len()];
    }
    let mut parts = Vec::with_capacity(weights.len());
    let mut remainders = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let scaled = total as u128 * w as u128;
        parts.push((scaled / weight_sum) as u64);
        remainders.push((scaled % weight_sum, i));
    }
    let left = total - parts.iter().sum::<u64>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| keys[a.1].cmp(keys[b.1])));
    for &(_, i) in remainders.iter().take(left as usize) {
        parts[i] += 1;
    }
    parts
}

/// Capped proportional allocation of `total` votes over `red`.
pub fn allocate(
    red: &[DistrictRecord],
    total: u64,
    base: AllocationBase,
) -> Result<Vec<u64>, ScenarioError> {
    let capacity: Vec<u64> = red.iter().map(DistrictRecord::mail_c2).collect();
    let available: u64 = capacity.iter().sum();
    if total > available {
        return Err(ScenarioError::Capacity {
            requested: total,
            available,
        });
    }
    let weight = |d: &DistrictRecord| match base {
        AllocationBase::MailTotal => d.mail_total(),
        AllocationBase::CandidateTwoMail => d.mail_c2(),
    };

    let mut alloc = vec![0u64; red.len()];
    let mut active: Vec<usize> = (0..red.len()).filter(|&i| capacity[i] > 0).collect();
    let mut remaining = total;
    while remaining > 0 {
        let weights: Vec<u64> = active.iter().map(|&i| weight(&red[i])).collect();
        let keys: Vec<&str> = active.iter().map(|&i| red[i].district_id()).collect();
        // A zero-weight district with spare capacity only takes votes once
        // every weighted district is full.
        let shares = if weights.iter().all(|&w| w == 0) {
            largest_remainder(remaining, &vec![1; active.len()], &keys)
        } else {
            largest_remainder(remaining, &weights, &keys)
        };
        let over: Vec<usize> = active
            .iter()
            .zip(&shares)
            .filter(|(&i, &s)| s > capacity[i])
            .map(|(&i, _)| i)
            .collect();
        if over.is_empty() {
            for (&i, s) in active.iter().zip(shares) {
                alloc[i] = s;
            }
            break;
        }
        for &i in &over {
            alloc[i] = capacity[i];
            remaining -= capacity[i];
        }
        active.retain(|i| !over.contains(i));
    }
    Ok(alloc)
}

/// Moves `votes_to_move` mail votes from candidate 2 to candidate 1 across
/// the `red` districts of `ds`.
///
/// ```
/// use ballot_audit::election_data::{bundled_dataset, partition};
/// use ballot_audit::scenario::{build_reversal_scenario, AllocationBase};
///
/// let ds = bundled_dataset();
/// let red = partition(&ds, false).red;
/// let s = build_reversal_scenario(&ds, &red, 15432, AllocationBase::MailTotal).unwrap();
/// assert_eq!(s.resulting_margin, 1);
/// ```
pub fn build_reversal_scenario(
    ds: &ElectionDataset,
    red: &[DistrictRecord],
    votes_to_move: u64,
    base: AllocationBase,
) -> Result<ScenarioResult, ScenarioError> {
    for d in red {
        if ds.get(d.district_id()).is_none() {
            return Err(ScenarioError::UnknownDistrict(d.district_id().to_string()));
        }
    }
    let alloc = allocate(red, votes_to_move, base)?;
    let moved: HashMap<&str, u64> = red
        .iter()
        .map(DistrictRecord::district_id)
        .zip(alloc.iter().copied())
        .collect();

    let districts = ds
        .districts()
        .iter()
        .map(|d| match moved.get(d.district_id()) {
            Some(&n) if n > 0 => d
                .with_mail_c1(d.mail_c1() + n)
                .expect("allocation respects capacity"),
            _ => d.clone(),
        })
        .collect();
    let modified = ElectionDataset::new(districts).expect("ids unchanged");
    let resulting_margin = modified.total_c1() as i64 - modified.total_c2() as i64;

    Ok(ScenarioResult {
        modified,
        votes_moved_per_district: moved.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        total_moved: votes_to_move,
        resulting_margin,
        base,
    })
}
