pub mod channel;
pub mod groupcrypto;
pub mod harness;
pub mod ledger;
pub mod onion;
pub mod participant;
