//! The escrow contract: denominated deposits, a fixed-size buffer, a FIFO
//! pool, withdrawal at any time and a concatenated-signature payout.

use std::collections::VecDeque;

use crate::groupcrypto::{derive_sig_pk, verify, GroupElement, Signature};
use crate::onion::Destination;

use super::{AccountId, EscrowId, LedgerError, RejectReason};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Account {
    pub id: AccountId,
    pub balance: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Filling,
    Mixing,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Member {
    pub account: AccountId,
    pub pk_enc: GroupElement,
}

/// 1-based slot a deposit landed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    Buffer(usize),
    Pool(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PayoutMessage {
    pub destinations: Vec<Destination>,
    pub signer_pks: Vec<GroupElement>,
    pub sigs: Vec<Signature>,
}

/// Bytes every buffer member signs: the destination list bound to one
/// escrow and one round.
pub fn payout_message_bytes(
    destinations: &[Destination],
    escrow: &EscrowId,
    round: u64,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 2 + destinations.len() * 20 + 32 + 8);
    out.extend_from_slice(b"tumbler/payout");
    out.extend_from_slice(&(destinations.len() as u16).to_be_bytes());
    for d in destinations {
        out.extend_from_slice(&d.0);
    }
    out.extend_from_slice(&escrow.0);
    out.extend_from_slice(&round.to_be_bytes());
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PayoutReceipt {
    pub round: u64,
    pub payers: Vec<AccountId>,
    pub credits: Vec<(Destination, u64)>,
    pub promoted: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EscrowState {
    pub id: EscrowId,
    pub channel_id: [u8; 32],
    pub denomination: u64,
    pub k: usize,
    pub gas_fee: u64,
    pub buffer: Vec<Member>,
    pub pool: VecDeque<Member>,
    pub escrow_balance: u64,
    pub gas_collected: u64,
    pub phase: Phase,
    /// Incremented every time the buffer fills and mixing begins.
    pub round: u64,
}

impl EscrowState {
    pub fn new(
        id: EscrowId,
        channel_id: [u8; 32],
        denomination: u64,
        k: usize,
        gas_fee: u64,
    ) -> Result<Self, LedgerError> {
        if denomination == 0 || k < 2 {
            return Err(LedgerError::InvalidParams);
        }
        Ok(EscrowState {
            id,
            channel_id,
            denomination,
            k,
            gas_fee,
            buffer: Vec::new(),
            pool: VecDeque::new(),
            escrow_balance: 0,
            gas_collected: 0,
            phase: Phase::Filling,
            round: 0,
        })
    }

    pub fn is_depositor(&self, account: &AccountId) -> bool {
        self.buffer
            .iter()
            .chain(self.pool.iter())
            .any(|m| &m.account == account)
    }

    pub fn in_buffer(&self, account: &AccountId) -> bool {
        self.buffer.iter().any(|m| &m.account == account)
    }

    pub fn deposit(
        &mut self,
        from: &mut Account,
        pk_enc: GroupElement,
    ) -> Result<Placement, LedgerError> {
        if self.is_depositor(&from.id) {
            return Err(LedgerError::AlreadyDeposited);
        }
        let cost = self.denomination + self.gas_fee;
        if from.balance < cost {
            return Err(LedgerError::InsufficientFunds);
        }
        from.balance -= cost;
        self.escrow_balance += self.denomination;
        self.gas_collected += self.gas_fee;
        let member = Member {
            account: from.id,
            pk_enc,
        };
        if self.phase == Phase::Filling && self.buffer.len() < self.k {
            self.buffer.push(member);
            let slot = self.buffer.len();
            self.enter_mixing_if_full();
            Ok(Placement::Buffer(slot))
        } else {
            self.pool.push_back(member);
            Ok(Placement::Pool(self.pool.len()))
        }
    }

    /// Refunds the full denomination. Returns `(refund, promoted)`.
    pub fn withdraw(&mut self, from: &mut Account) -> Result<(u64, usize), LedgerError> {
        let mut promoted = 0;
        if let Some(i) = self.buffer.iter().position(|m| m.account == from.id) {
            self.buffer.remove(i);
            if self.phase == Phase::Mixing {
                self.phase = Phase::Filling;
                if let Some(head) = self.pool.pop_front() {
                    self.buffer.push(head);
                    promoted = 1;
                }
                self.enter_mixing_if_full();
            }
        } else if let Some(i) = self.pool.iter().position(|m| m.account == from.id) {
            self.pool.remove(i);
        } else {
            return Err(LedgerError::NotADepositor);
        }
        self.escrow_balance -= self.denomination;
        from.balance += self.denomination;
        Ok((self.denomination, promoted))
    }

    /// Validates a concatenated-signature payout. On success every credit is
    /// returned for the caller to apply and the buffer is flushed; on
    /// rejection nothing changes.
    pub fn submit_payout(&mut self, msg: &PayoutMessage) -> Result<PayoutReceipt, RejectReason> {
        if self.phase != Phase::Mixing {
            return Err(RejectReason::WrongPhase);
        }
        let k = self.k;
        if msg.destinations.len() != k || msg.sigs.len() != k || msg.signer_pks.len() != k {
            return Err(RejectReason::CountMismatch);
        }
        let expected: Vec<GroupElement> = self
            .buffer
            .iter()
            .map(|m| derive_sig_pk(&self.channel_id, &m.pk_enc))
            .collect();
        let bytes = payout_message_bytes(&msg.destinations, &self.id, self.round);
        let mut matched = vec![false; expected.len()];
        for (i, (pk, sig)) in msg.signer_pks.iter().zip(&msg.sigs).enumerate() {
            let Some(slot) = expected.iter().position(|e| e == pk) else {
                return Err(RejectReason::UnknownSigner(i));
            };
            if matched[slot] {
                return Err(RejectReason::DuplicateSigner(i));
            }
            matched[slot] = true;
            if !verify(pk, &bytes, sig) {
                return Err(RejectReason::BadSignature(i));
            }
        }
        let round = self.round;
        let payers = self.buffer.iter().map(|m| m.account).collect();
        let credits = msg
            .destinations
            .iter()
            .map(|d| (*d, self.denomination))
            .collect();
        self.escrow_balance -= self.denomination * k as u64;
        self.buffer.clear();
        let promoted = self.flush();
        Ok(PayoutReceipt {
            round,
            payers,
            credits,
            promoted,
        })
    }

    /// Moves up to `k` pool members into the emptied buffer, FIFO.
    pub(crate) fn flush(&mut self) -> usize {
        self.phase = Phase::Filling;
        let take = self.pool.len().min(self.k - self.buffer.len());
        self.buffer.extend(self.pool.drain(..take));
        self.enter_mixing_if_full();
        take
    }

    fn enter_mixing_if_full(&mut self) {
        if self.phase == Phase::Filling && self.buffer.len() == self.k {
            self.phase = Phase::Mixing;
            self.round += 1;
        }
    }

    /// Structural invariants; used by tests and debug assertions.
    pub fn check_invariants(&self) -> Result<(), &'static str> {
        if self.escrow_balance != self.denomination * (self.buffer.len() + self.pool.len()) as u64 {
            return Err("escrow balance does not match membership");
        }
        if self.buffer.len() > self.k {
            return Err("buffer over capacity");
        }
        if (self.phase == Phase::Mixing) != (self.buffer.len() == self.k) {
            return Err("phase disagrees with buffer occupancy");
        }
        let mut ids: Vec<_> = self
            .buffer
            .iter()
            .chain(self.pool.iter())
            .map(|m| m.account)
            .collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err("account deposited twice");
        }
        Ok(())
    }
}
