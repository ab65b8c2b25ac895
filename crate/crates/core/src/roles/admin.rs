use std::collections::BTreeMap;

use crate::hash::Token;
use crate::hashchain::{generate_seed, ChainError, ChainId, HashChain, Seed};
use crate::roles::{UpdateReport, UpdateStatus};
use crate::token_protocol::{make_transmission_token, ProtocolError, SoftwareUpdatePackage};
use crate::wire::UpdateBundle;

#[derive(Debug, thiserror::Error)]
pub enum AdminError {
    #[error("unknown chain {0}")]
    UnknownChain(ChainId),
    #[error("chain {0} is already registered")]
    DuplicateChain(ChainId),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Registry of one hash chain per satellite, plus the last bundle issued
/// on each chain so it can be resent without consuming another token.
#[derive(Debug, Default)]
pub struct Administrator {
    registry: BTreeMap<ChainId, HashChain>,
    pending: BTreeMap<ChainId, UpdateBundle>,
}

impl Administrator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates a chain from a fresh seed. Returns the anchor to install on
    /// the satellite before launch.
    pub fn provision(&mut self, n: u32) -> Result<(ChainId, Token), AdminError> {
        loop {
            let chain = HashChain::build(generate_seed()?, n)?;
            if self.registry.contains_key(&chain.id()) {
                continue;
            }
            return self.register(chain);
        }
    }

    pub fn provision_with_seed(
        &mut self,
        seed: Seed,
        n: u32,
    ) -> Result<(ChainId, Token), AdminError> {
        self.register(HashChain::build(seed, n)?)
    }

    pub fn register(&mut self, chain: HashChain) -> Result<(ChainId, Token), AdminError> {
        let id = chain.id();
        if self.registry.contains_key(&id) {
            return Err(AdminError::DuplicateChain(id));
        }
        let anchor = chain.trust_anchor();
        self.registry.insert(id, chain);
        Ok((id, anchor))
    }

    pub fn chain(&self, id: &ChainId) -> Option<&HashChain> {
        self.registry.get(id)
    }

    pub fn chain_ids(&self) -> impl Iterator<Item = &ChainId> {
        self.registry.keys()
    }

    /// Consumes the next token pair of `id` and wraps `sup` into a bundle.
    pub fn issue(
        &mut self,
        id: &ChainId,
        sup: &SoftwareUpdatePackage,
    ) -> Result<UpdateBundle, AdminError> {
        let chain = self
            .registry
            .get_mut(id)
            .ok_or(AdminError::UnknownChain(*id))?;
        let bundle = issue_from_chain(chain, sup)?;
        self.pending.insert(*id, bundle.clone());
        Ok(bundle)
    }

    /// The in-flight bundle for `id`, unchanged. Does not move the cursor.
    pub fn retransmit(&self, id: &ChainId) -> Option<&UpdateBundle> {
        self.pending.get(id)
    }

    /// Clears the pending bundle once the satellite confirms it.
    pub fn acknowledge(&mut self, report: &UpdateReport) -> bool {
        let matches = report.status == UpdateStatus::Success
            && self
                .pending
                .get(&report.chain_id)
                .is_some_and(|b| b.ordinal == report.ordinal);
        if matches {
            self.pending.remove(&report.chain_id);
        }
        matches
    }
}

/// Issues one bundle directly from a chain, as done by the file-based CLI.
pub fn issue_from_chain(
    chain: &mut HashChain,
    sup: &SoftwareUpdatePackage,
) -> Result<UpdateBundle, AdminError> {
    let ordinal = chain.len() - chain.cursor();
    let pair = chain.next_token_pair()?;
    let tt = make_transmission_token(sup, &pair.current, &pair.previous)?;
    Ok(UpdateBundle {
        chain_id: chain.id(),
        ordinal,
        payload: sup.payload.clone(),
        tt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TT1: &str = "1eb0c9af893a36da47a91296b7fd5b9cbcfb250f5e68a4e01411b2b138feb776";

    #[test]
    fn golden_first_issue() {
        let mut admin = Administrator::new();
        let (id, anchor) = admin
            .provision_with_seed(Seed::from_bytes([0; 32]), 3)
            .unwrap();
        assert_eq!(
            anchor.to_hex(),
            "12771355e46cd47c71ed1721fd5319b383cca3a1f9fce3aa1c8cd3bd37af20d7"
        );
        let b = admin
            .issue(&id, &SoftwareUpdatePackage::new("sw1"))
            .unwrap();
        assert_eq!(b.tt.to_hex(), TT1);
        assert_eq!(b.ordinal, 1);
        assert_eq!(b.payload, b"sw1");
    }

    #[test]
    fn length_three_supports_two_updates() {
        let mut admin = Administrator::new();
        let (id, _) = admin.provision(3).unwrap();
        admin.issue(&id, &SoftwareUpdatePackage::new("a")).unwrap();
        let second = admin.issue(&id, &SoftwareUpdatePackage::new("b")).unwrap();
        assert_eq!(second.ordinal, 2);
        assert!(matches!(
            admin.issue(&id, &SoftwareUpdatePackage::new("c")),
            Err(AdminError::Chain(ChainError::Exhausted))
        ));
    }

    #[test]
    fn length_two_supports_one_update() {
        let mut admin = Administrator::new();
        let (id, _) = admin.provision(2).unwrap();
        admin.issue(&id, &SoftwareUpdatePackage::new("a")).unwrap();
        assert!(admin.issue(&id, &SoftwareUpdatePackage::new("b")).is_err());
    }

    #[test]
    fn provisions_are_distinct() {
        let mut admin = Administrator::new();
        let (a, ta) = admin.provision(4).unwrap();
        let (b, tb) = admin.provision(4).unwrap();
        assert_ne!(a, b);
        assert_ne!(ta, tb);
        assert_eq!(admin.chain_ids().count(), 2);
    }

    #[test]
    fn duplicate_registration_is_refused() {
        let mut admin = Administrator::new();
        admin
            .provision_with_seed(Seed::from_bytes([1; 32]), 3)
            .unwrap();
        assert!(matches!(
            admin.provision_with_seed(Seed::from_bytes([1; 32]), 3),
            Err(AdminError::DuplicateChain(_))
        ));
    }

    #[test]
    fn retransmit_keeps_cursor() {
        let mut admin = Administrator::new();
        let (id, _) = admin.provision(4).unwrap();
        let b = admin.issue(&id, &SoftwareUpdatePackage::new("x")).unwrap();
        let cursor = admin.chain(&id).unwrap().cursor();
        for _ in 0..3 {
            assert_eq!(admin.retransmit(&id), Some(&b));
        }
        assert_eq!(admin.chain(&id).unwrap().cursor(), cursor);
    }

    #[test]
    fn unknown_chain() {
        let mut admin = Administrator::new();
        let id = ChainId::from_bytes([0; 16]);
        assert!(matches!(
            admin.issue(&id, &SoftwareUpdatePackage::default()),
            Err(AdminError::UnknownChain(_))
        ));
    }
}
