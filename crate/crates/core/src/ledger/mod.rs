//! Simulated blockchain hosting escrow contracts.
//!
//! The ledger processes one transaction at a time in submission order and
//! appends every outcome to a public, append-only event log.

mod escrow;
mod log;

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::groupcrypto::GroupElement;
use crate::onion::Destination;

pub use escrow::{
    payout_message_bytes, Account, EscrowState, Member, PayoutMessage, PayoutReceipt, Phase,
    Placement,
};
pub use log::{replay_deltas, EventKind, EventRecord, LedgerEvent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccountId(pub [u8; 20]);

impl std::fmt::Display for AccountId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", hex::encode(self.0))
    }
}

impl From<Destination> for AccountId {
    fn from(d: Destination) -> Self {
        AccountId(d.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EscrowId(pub [u8; 32]);

impl std::fmt::Display for EscrowId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", hex::encode(self.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum RejectReason {
    #[error("destination, signature and signer counts must all equal the group size")]
    CountMismatch,
    #[error("signature {0} does not verify")]
    BadSignature(usize),
    #[error("signer {0} is not a buffer member")]
    UnknownSigner(usize),
    #[error("signer {0} already signed")]
    DuplicateSigner(usize),
    #[error("escrow is not mixing")]
    WrongPhase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("invalid escrow parameters")]
    InvalidParams,
    #[error("insufficient funds")]
    InsufficientFunds,
    #[error("account already deposited")]
    AlreadyDeposited,
    #[error("account is not a depositor")]
    NotADepositor,
    #[error("unknown escrow")]
    UnknownEscrow,
    #[error("payout rejected: {0}")]
    Rejected(RejectReason),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Transaction {
    /// Creates an escrow keyed by `key`; repeated opens with the same key
    /// return the existing escrow.
    Open {
        key: [u8; 32],
        denomination: u64,
        k: usize,
        gas_fee: u64,
    },
    Deposit {
        escrow: EscrowId,
        from: AccountId,
        pk_enc: GroupElement,
    },
    Withdraw {
        escrow: EscrowId,
        from: AccountId,
    },
    Payout {
        escrow: EscrowId,
        submitter: AccountId,
        msg: PayoutMessage,
    },
}

impl Transaction {
    pub fn sender(&self) -> Option<AccountId> {
        match self {
            Transaction::Open { .. } => None,
            Transaction::Deposit { from, .. } | Transaction::Withdraw { from, .. } => Some(*from),
            Transaction::Payout { submitter, .. } => Some(*submitter),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TxOutcome {
    Opened(EscrowId),
    Deposited(Placement),
    Withdrawn(u64),
    PaidOut(PayoutReceipt),
}

#[derive(Clone, Debug)]
pub struct Ledger {
    accounts: BTreeMap<AccountId, u64>,
    escrows: BTreeMap<EscrowId, EscrowState>,
    events: Vec<LedgerEvent>,
    minted: u128,
    rng: ChaCha20Rng,
}

impl Ledger {
    pub fn new(seed: u64) -> Self {
        Ledger {
            accounts: BTreeMap::new(),
            escrows: BTreeMap::new(),
            events: Vec::new(),
            minted: 0,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Genesis allocation; not a transaction.
    pub fn fund(&mut self, account: AccountId, amount: u64) {
        *self.accounts.entry(account).or_default() += amount;
        self.minted += amount as u128;
    }

    pub fn balance(&self, account: &AccountId) -> u64 {
        self.accounts.get(account).copied().unwrap_or(0)
    }

    pub fn accounts(&self) -> &BTreeMap<AccountId, u64> {
        &self.accounts
    }

    pub fn escrow(&self, id: &EscrowId) -> Option<&EscrowState> {
        self.escrows.get(id)
    }

    pub fn escrows(&self) -> impl Iterator<Item = &EscrowState> {
        self.escrows.values()
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn gas_collected(&self) -> u64 {
        self.escrows.values().map(|e| e.gas_collected).sum()
    }

    /// `(held, minted)`: everything in accounts, escrows and gas against the
    /// genesis total.
    pub fn conservation(&self) -> (u128, u128) {
        let accounts: u128 = self.accounts.values().map(|b| *b as u128).sum();
        let escrows: u128 = self
            .escrows
            .values()
            .map(|e| e.escrow_balance as u128 + e.gas_collected as u128)
            .sum();
        (accounts + escrows, self.minted)
    }

    pub fn is_conserved(&self) -> bool {
        let (held, minted) = self.conservation();
        held == minted
    }

    /// Opens an escrow with fresh random identifiers.
    pub fn new_escrow(
        &mut self,
        denomination: u64,
        k: usize,
        gas_fee: u64,
    ) -> Result<EscrowId, LedgerError> {
        let mut key = [0u8; 32];
        self.rng.fill_bytes(&mut key);
        self.open(key, denomination, k, gas_fee)
    }

    fn open(
        &mut self,
        key: [u8; 32],
        denomination: u64,
        k: usize,
        gas_fee: u64,
    ) -> Result<EscrowId, LedgerError> {
        let id = EscrowId(key);
        if self.escrows.contains_key(&id) {
            return Ok(id);
        }
        let mut channel_id = [0u8; 32];
        self.rng.fill_bytes(&mut channel_id);
        let state = EscrowState::new(id, channel_id, denomination, k, gas_fee)?;
        self.escrows.insert(id, state);
        self.push(log::EventBody::Create {
            escrow: id,
            channel_id,
            denomination,
            k,
            gas_fee,
        });
        Ok(id)
    }

    pub fn apply(&mut self, tx: Transaction) -> Result<TxOutcome, LedgerError> {
        let escrow_of = |tx: &Transaction| match tx {
            Transaction::Open { key, .. } => EscrowId(*key),
            Transaction::Deposit { escrow, .. }
            | Transaction::Withdraw { escrow, .. }
            | Transaction::Payout { escrow, .. } => *escrow,
        };
        let escrow = escrow_of(&tx);
        let sender = tx.sender();
        let result = self.apply_inner(tx);
        if let Err(e) = &result {
            self.push(log::EventBody::Reject {
                escrow,
                from: sender,
                reason: e.to_string(),
            });
        }
        result
    }

    fn apply_inner(&mut self, tx: Transaction) -> Result<TxOutcome, LedgerError> {
        match tx {
            Transaction::Open {
                key,
                denomination,
                k,
                gas_fee,
            } => self
                .open(key, denomination, k, gas_fee)
                .map(TxOutcome::Opened),
            Transaction::Deposit {
                escrow,
                from,
                pk_enc,
            } => {
                let state = self
                    .escrows
                    .get_mut(&escrow)
                    .ok_or(LedgerError::UnknownEscrow)?;
                let mut account = Account {
                    id: from,
                    balance: self.accounts.get(&from).copied().unwrap_or(0),
                };
                let round_before = state.round;
                let placement = state.deposit(&mut account, pk_enc.clone())?;
                let (amount, gas, round) = (state.denomination, state.gas_fee, state.round);
                self.accounts.insert(from, account.balance);
                self.push(log::EventBody::Deposit {
                    escrow,
                    from,
                    pk_enc: pk_enc.to_bytes(),
                    amount,
                    gas,
                    placement,
                    mixing_round: (round != round_before).then_some(round),
                });
                Ok(TxOutcome::Deposited(placement))
            }
            Transaction::Withdraw { escrow, from } => {
                let state = self
                    .escrows
                    .get_mut(&escrow)
                    .ok_or(LedgerError::UnknownEscrow)?;
                let mut account = Account {
                    id: from,
                    balance: self.accounts.get(&from).copied().unwrap_or(0),
                };
                let round_before = state.round;
                let (refund, promoted) = state.withdraw(&mut account)?;
                let round = state.round;
                self.accounts.insert(from, account.balance);
                self.push(log::EventBody::Withdraw {
                    escrow,
                    from,
                    amount: refund,
                });
                if promoted > 0 {
                    self.push(log::EventBody::Flush {
                        escrow,
                        promoted,
                        mixing_round: (round != round_before).then_some(round),
                    });
                }
                Ok(TxOutcome::Withdrawn(refund))
            }
            Transaction::Payout {
                escrow,
                submitter,
                msg,
            } => {
                let state = self
                    .escrows
                    .get_mut(&escrow)
                    .ok_or(LedgerError::UnknownEscrow)?;
                let receipt = state.submit_payout(&msg).map_err(LedgerError::Rejected)?;
                let round_after = state.round;
                let each = state.denomination;
                for (dest, amount) in &receipt.credits {
                    *self.accounts.entry(AccountId::from(*dest)).or_default() += amount;
                }
                self.push(log::EventBody::Payout {
                    escrow,
                    submitter,
                    round: receipt.round,
                    payers: receipt.payers.clone(),
                    destinations: msg.destinations.clone(),
                    amount_each: each,
                });
                self.push(log::EventBody::Flush {
                    escrow,
                    promoted: receipt.promoted,
                    mixing_round: (round_after != receipt.round).then_some(round_after),
                });
                Ok(TxOutcome::PaidOut(receipt))
            }
        }
    }

    fn push(&mut self, body: log::EventBody) {
        let seq = self.events.len() as u64;
        self.events.push(LedgerEvent { seq, body });
    }

    /// Line-delimited JSON, one record per event.
    pub fn export_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(&e.record()).expect("records serialize"));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests;
