use std::collections::BTreeMap;

use super::StoreError;

/// A chain state: previous APs (oldest first) followed by the current AP.
pub type State = Vec<String>;

/// Destination counts observed from one state.
pub type Successors = BTreeMap<String, u64>;

/// Per-order transition count tables (the D2 knowlet). Table `k` is keyed
/// by states of arity `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkovModel {
    max_order: usize,
    tables: Vec<BTreeMap<State, Successors>>,
    total_records: u64,
}

/// Next-AP distribution for one state, most likely first.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub state: State,
    pub entries: Vec<(String, f64)>,
    /// The raw counts behind `entries`, same order.
    pub counts: Vec<(String, u64)>,
    pub support_count: u64,
}

impl Distribution {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl MarkovModel {
    pub fn new(max_order: usize) -> Result<Self, StoreError> {
        if max_order == 0 {
            return Err(StoreError::OrderOutOfRange { order: 0, max_order });
        }
        Ok(MarkovModel {
            max_order,
            tables: vec![BTreeMap::new(); max_order],
            total_records: 0,
        })
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Sum of all order-1 counts, i.e. the number of modeled handovers.
    pub fn total_records(&self) -> u64 {
        self.total_records
    }

    pub fn is_empty(&self) -> bool {
        self.tables.iter().all(BTreeMap::is_empty)
    }

    fn check_order(&self, order: usize) -> Result<(), StoreError> {
        if order == 0 || order > self.max_order {
            return Err(StoreError::OrderOutOfRange {
                order,
                max_order: self.max_order,
            });
        }
        Ok(())
    }

    pub fn table(&self, order: usize) -> Result<&BTreeMap<State, Successors>, StoreError> {
        self.check_order(order)?;
        Ok(&self.tables[order - 1])
    }

    /// Number of distinct states per order, order 1 first.
    pub fn state_counts(&self) -> Vec<usize> {
        self.tables.iter().map(BTreeMap::len).collect()
    }

    /// Count of `state -> to`; zero for anything unseen or out of range.
    pub fn count<S: AsRef<str>>(&self, state: &[S], to: &str) -> u64 {
        if state.is_empty() || state.len() > self.max_order {
            return 0;
        }
        let key: State = state.iter().map(|s| s.as_ref().to_string()).collect();
        self.tables[state.len() - 1]
            .get(&key)
            .and_then(|succ| succ.get(to))
            .copied()
            .unwrap_or(0)
    }

    /// Adds `count` observations of `history ++ [from] -> to` to the table
    /// of order `history.len() + 1`.
    pub fn observe<S: AsRef<str>>(
        &mut self,
        history: &[S],
        from: &str,
        to: &str,
        count: u64,
    ) -> Result<(), StoreError> {
        let order = history.len() + 1;
        self.check_order(order)?;
        let mut state: State = history.iter().map(|s| s.as_ref().to_string()).collect();
        state.push(from.to_string());
        self.add(order, state, to.to_string(), count);
        Ok(())
    }

    pub(crate) fn add(&mut self, order: usize, state: State, to: String, count: u64) {
        if count == 0 {
            return;
        }
        *self.tables[order - 1].entry(state).or_default().entry(to).or_insert(0) += count;
        if order == 1 {
            self.total_records += count;
        }
    }

    /// Empirical next-AP probabilities for `state` at `order`, without
    /// smoothing: unseen states give an empty distribution.
    pub fn transition_distribution<S: AsRef<str>>(
        &self,
        order: usize,
        state: &[S],
    ) -> Result<Distribution, StoreError> {
        self.check_order(order)?;
        if state.len() != order {
            return Err(StoreError::StateArityMismatch {
                expected: order,
                got: state.len(),
            });
        }
        let key: State = state.iter().map(|s| s.as_ref().to_string()).collect();
        let mut counts: Vec<(String, u64)> = self.tables[order - 1]
            .get(&key)
            .map(|succ| succ.iter().map(|(to, c)| (to.clone(), *c)).collect())
            .unwrap_or_default();
        // descending count is descending probability; BTreeMap already
        // yields ascending bssid for the stable tie-break
        counts.sort_by_key(|c| std::cmp::Reverse(c.1));
        let support_count: u64 = counts.iter().map(|(_, c)| c).sum();
        let entries = counts
            .iter()
            .map(|(to, c)| (to.clone(), *c as f64 / support_count as f64))
            .collect();
        Ok(Distribution {
            state: key,
            entries,
            counts,
            support_count,
        })
    }

    /// Elementwise count addition of `other` into `self`.
    pub fn merge_from(&mut self, other: &MarkovModel) -> Result<(), StoreError> {
        if self.max_order != other.max_order {
            return Err(StoreError::OrderMismatch {
                left: self.max_order,
                right: other.max_order,
            });
        }
        for (order, table) in other.tables.iter().enumerate() {
            for (state, succ) in table {
                for (to, c) in succ {
                    self.add(order + 1, state.clone(), to.clone(), *c);
                }
            }
        }
        Ok(())
    }

    pub fn merge(&self, other: &MarkovModel) -> Result<MarkovModel, StoreError> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    pub(crate) fn tables(&self) -> &[BTreeMap<State, Successors>] {
        &self.tables
    }
}
