//! Deviating participants. Each variant behaves honestly except for the one
//! named deviation.

use thiserror::Error;

use crate::onion::Destination;

use super::{Participant, ParticipantConfig};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AdversaryKind {
    /// Deposits, then never speaks again.
    Silent,
    /// Omits item `index` from its stage post.
    Dropper { position: u16, index: usize },
    /// Replaces item `index` of its stage post with an onion (or, at the
    /// last position, a destination) of its own choosing.
    Modifier {
        position: u16,
        index: usize,
        substitute: Destination,
    },
    /// `a` and `c` both open blame against `target`, and `c` lies about the
    /// post it received. `deliver_proof` says whether the target's proof
    /// reaches the channel.
    FalseAccuserPair {
        a: u16,
        c: u16,
        target: u16,
        deliver_proof: bool,
    },
    /// Completes the shuffle but never posts its signature tag.
    NonSigner,
}

/// The behaviour a single participant runs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Role {
    Honest,
    Silent,
    Dropper {
        index: usize,
    },
    Modifier {
        index: usize,
        substitute: Destination,
    },
    Accuser {
        liar: bool,
    },
    NonSigner,
}

impl Role {
    pub fn is_honest(&self) -> bool {
        matches!(self, Role::Honest)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("invalid adversary parameters: {0}")]
pub struct InvalidAdversaryParams(pub String);

impl AdversaryKind {
    /// Chain positions the deviation occupies; `default` for single-seat kinds.
    pub fn positions(&self, default: u16) -> Vec<u16> {
        match self {
            AdversaryKind::Dropper { position, .. } | AdversaryKind::Modifier { position, .. } => {
                vec![*position]
            }
            AdversaryKind::FalseAccuserPair { a, c, .. } => vec![*a, *c],
            AdversaryKind::Silent | AdversaryKind::NonSigner => vec![default],
        }
    }

    pub fn validate(&self, k: usize) -> Result<(), InvalidAdversaryParams> {
        let bad = |m: &str| Err(InvalidAdversaryParams(m.to_string()));
        let in_range = |p: u16| p >= 1 && p as usize <= k;
        match self {
            AdversaryKind::Dropper { position, index }
            | AdversaryKind::Modifier {
                position, index, ..
            } => {
                if !in_range(*position) {
                    return bad("position outside the group");
                }
                if *index >= k {
                    return bad("item index outside the post");
                }
                Ok(())
            }
            AdversaryKind::FalseAccuserPair { a, c, target, .. } => {
                if k < 3 {
                    return bad("false accusation needs at least three members");
                }
                if !(in_range(*a) && in_range(*c) && *target == a + 1 && *c == target + 1) {
                    return bad("accusers must be the target's two neighbours");
                }
                Ok(())
            }
            AdversaryKind::Silent | AdversaryKind::NonSigner => Ok(()),
        }
    }

    fn role_at(&self, at: u16) -> Result<Role, InvalidAdversaryParams> {
        let wrong = || {
            Err(InvalidAdversaryParams(format!(
                "no deviation at position {at}"
            )))
        };
        Ok(match self {
            AdversaryKind::Silent => Role::Silent,
            AdversaryKind::NonSigner => Role::NonSigner,
            AdversaryKind::Dropper { position, index } if *position == at => {
                Role::Dropper { index: *index }
            }
            AdversaryKind::Modifier {
                position,
                index,
                substitute,
            } if *position == at => Role::Modifier {
                index: *index,
                substitute: *substitute,
            },
            AdversaryKind::FalseAccuserPair { a, .. } if *a == at => Role::Accuser { liar: false },
            AdversaryKind::FalseAccuserPair { c, .. } if *c == at => Role::Accuser { liar: true },
            _ => return wrong(),
        })
    }
}

/// Builds the participant that plays `kind` at chain position `at` of a
/// group of `k`.
pub fn make_adversary(
    kind: &AdversaryKind,
    k: usize,
    at: u16,
    mut base: ParticipantConfig,
) -> Result<Participant, InvalidAdversaryParams> {
    kind.validate(k)?;
    base.role = kind.role_at(at)?;
    Ok(Participant::new(base))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_checks() {
        let sub = Destination([1; 20]);
        assert!(AdversaryKind::Dropper {
            position: 3,
            index: 2
        }
        .validate(3)
        .is_ok());
        assert!(AdversaryKind::Dropper {
            position: 4,
            index: 0
        }
        .validate(3)
        .is_err());
        assert!(AdversaryKind::Modifier {
            position: 1,
            index: 3,
            substitute: sub
        }
        .validate(3)
        .is_err());
        assert!(AdversaryKind::FalseAccuserPair {
            a: 1,
            c: 3,
            target: 2,
            deliver_proof: true
        }
        .validate(3)
        .is_ok());
        assert!(AdversaryKind::FalseAccuserPair {
            a: 1,
            c: 3,
            target: 2,
            deliver_proof: true
        }
        .validate(2)
        .is_err());
        assert!(AdversaryKind::FalseAccuserPair {
            a: 1,
            c: 4,
            target: 2,
            deliver_proof: true
        }
        .validate(5)
        .is_err());
        assert!(AdversaryKind::Silent.validate(2).is_ok());
    }

    #[test]
    fn roles_follow_positions() {
        let pair = AdversaryKind::FalseAccuserPair {
            a: 2,
            c: 4,
            target: 3,
            deliver_proof: false,
        };
        assert_eq!(pair.role_at(2), Ok(Role::Accuser { liar: false }));
        assert_eq!(pair.role_at(4), Ok(Role::Accuser { liar: true }));
        assert!(pair.role_at(3).is_err());
        assert_eq!(pair.positions(1), vec![2, 4]);
        assert_eq!(AdversaryKind::NonSigner.positions(5), vec![5]);
    }
}
