use super::{AnonymousSession, START};

/// A handover seen by a chain of order `order`: the `order - 1` previous
/// APs (oldest first, START-padded), then `from -> to`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransitionRecord {
    pub order: usize,
    pub history: Vec<String>,
    pub from: String,
    pub to: String,
    pub timestamp: u64,
}

impl TransitionRecord {
    /// `history ++ [from]`, the chain state this record conditions on.
    pub fn state(&self) -> Vec<String> {
        let mut s = self.history.clone();
        s.push(self.from.clone());
        s
    }
}

/// Emits, for every hop and every order `1..=max_order`, the record with
/// the matching amount of history. Output is hop-major.
pub fn expand_orders(session: &AnonymousSession, max_order: usize) -> Vec<TransitionRecord> {
    let hops = &session.transitions;
    let mut out = Vec::with_capacity(hops.len() * max_order);
    for (j, hop) in hops.iter().enumerate() {
        for order in 1..=max_order {
            let history = (1..order)
                .rev()
                .map(|back| match j.checked_sub(back) {
                    Some(i) => hops[i].from.clone(),
                    None => START.to_string(),
                })
                .collect();
            out.push(TransitionRecord {
                order,
                history,
                from: hop.from.clone(),
                to: hop.to.clone(),
                timestamp: hop.timestamp,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Transition;

    fn abc() -> AnonymousSession {
        AnonymousSession {
            transitions: vec![Transition::new("A", "B", 1), Transition::new("B", "C", 2)],
        }
    }

    fn of_order(r: &[TransitionRecord], k: usize) -> Vec<(Vec<&str>, &str, &str)> {
        r.iter()
            .filter(|x| x.order == k)
            .map(|x| {
                (
                    x.history.iter().map(String::as_str).collect(),
                    x.from.as_str(),
                    x.to.as_str(),
                )
            })
            .collect()
    }

    #[test]
    fn order_one_has_no_history() {
        let r = expand_orders(&abc(), 1);
        assert_eq!(of_order(&r, 1), vec![(vec![], "A", "B"), (vec![], "B", "C")]);
    }

    #[test]
    fn order_two_pads_with_start() {
        let r = expand_orders(&abc(), 2);
        assert_eq!(r.len(), 4);
        assert_eq!(of_order(&r, 2), vec![(vec![START], "A", "B"), (vec!["A"], "B", "C")]);
        assert_eq!(of_order(&r, 1).len(), 2);
    }

    #[test]
    fn order_three_matches_five_tuple_layout() {
        let r = expand_orders(&abc(), 3);
        assert_eq!(r.len(), 6);
        assert_eq!(
            of_order(&r, 3),
            vec![(vec![START, START], "A", "B"), (vec![START, "A"], "B", "C")]
        );
        let last = r.iter().find(|x| x.order == 3 && x.from == "B").unwrap();
        assert_eq!(last.state(), vec![START, "A", "B"]);
        assert_eq!(last.timestamp, 2);
    }

    #[test]
    fn long_history_uses_previous_froms() {
        let s = AnonymousSession {
            transitions: vec![
                Transition::new("A", "B", 1),
                Transition::new("B", "C", 2),
                Transition::new("C", "D", 3),
                Transition::new("D", "E", 4),
            ],
        };
        let r = expand_orders(&s, 3);
        assert_eq!(r.len(), 12);
        let last = r.last().unwrap();
        assert_eq!(
            (last.order, last.history.clone()),
            (3, vec!["B".to_string(), "C".to_string()])
        );
    }
}
