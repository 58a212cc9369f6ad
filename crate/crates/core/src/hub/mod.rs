//! Transport-independent routing core.
//!
//! [`Hub`] owns the client and group registries, applies permission checks
//! and computes recipient sets. It never touches payloads and never does I/O:
//! presence and group events it produces are queued as [`Notice`]s for the
//! caller to deliver.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::rngs::StdRng;
use rand::{RngCore, SeedableRng};

use crate::protocol::{
    validate_tags, BroadcastPolicy, ClientId, ClientKind, ClientName, ClientProfile, EventKind,
    FetchKind, Frame, GroupName, GroupSummary, ListItems, StatusCode, Target,
};

pub type HubResult<T> = Result<T, StatusCode>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub name: GroupName,
    pub owner: ClientId,
    pub policy: BroadcastPolicy,
    pub subscribers: BTreeSet<ClientId>,
}

impl Group {
    /// Whether `origin` may publish into this group.
    pub fn permits(&self, origin: ClientId) -> bool {
        match self.policy {
            BroadcastPolicy::OwnerOnly => origin == self.owner,
            BroadcastPolicy::Subscribers => {
                origin == self.owner || self.subscribers.contains(&origin)
            }
            BroadcastPolicy::Anyone => true,
        }
    }
}

/// Outcome of [`Hub::route`]. `recipients` is empty unless `status` is OK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingDecision {
    pub recipients: BTreeSet<ClientId>,
    pub status: StatusCode,
}

impl RoutingDecision {
    fn ok(recipients: BTreeSet<ClientId>) -> Self {
        Self {
            recipients,
            status: StatusCode::Ok,
        }
    }

    fn err(status: StatusCode) -> Self {
        Self {
            recipients: BTreeSet::new(),
            status,
        }
    }
}

/// An event frame the caller must deliver to `recipients`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Notice {
    pub recipients: Vec<ClientId>,
    pub frame: Frame,
}

#[derive(Debug, Default, Clone)]
pub struct Registry {
    clients: BTreeMap<ClientId, ClientProfile>,
    names: HashMap<ClientName, ClientId>,
    groups: BTreeMap<GroupName, Group>,
}

pub struct Hub {
    registry: Registry,
    rng: StdRng,
    notices: Vec<Notice>,
}

impl Default for Hub {
    fn default() -> Self {
        Self::new()
    }
}

impl Hub {
    pub fn new() -> Self {
        Self::with_rng(StdRng::from_os_rng())
    }

    /// A hub whose minted ids are reproducible.
    pub fn seeded(seed: u64) -> Self {
        Self::with_rng(StdRng::seed_from_u64(seed))
    }

    fn with_rng(rng: StdRng) -> Self {
        Self {
            registry: Registry::default(),
            rng,
            notices: Vec::new(),
        }
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    /// Drains the events produced since the last call, in production order.
    pub fn take_notices(&mut self) -> Vec<Notice> {
        std::mem::take(&mut self.notices)
    }

    pub fn register_client(
        &mut self,
        name: ClientName,
        kind: ClientKind,
        tags: Vec<String>,
    ) -> HubResult<ClientProfile> {
        if !validate_tags(&tags) {
            return Err(StatusCode::MalformedFrame);
        }
        if self.registry.names.contains_key(&name) {
            return Err(StatusCode::NameConflict);
        }
        let id = loop {
            let mut bytes = [0u8; 16];
            self.rng.fill_bytes(&mut bytes);
            let id = ClientId::from_random_bytes(bytes);
            if !self.registry.clients.contains_key(&id) {
                break id;
            }
        };
        let profile = ClientProfile {
            id,
            kind,
            name: name.clone(),
            tags,
        };
        let others: Vec<ClientId> = self.registry.clients.keys().copied().collect();
        self.registry.names.insert(name.clone(), id);
        self.registry.clients.insert(id, profile.clone());
        self.notify(others, EventKind::ClientJoined, name.as_str());
        Ok(profile)
    }

    /// Removes a client, its subscriptions and every group it owns. Returns the
    /// names of the deleted groups.
    pub fn unregister_client(&mut self, id: ClientId) -> HubResult<Vec<GroupName>> {
        let profile = self
            .registry
            .clients
            .remove(&id)
            .ok_or(StatusCode::NoSuchUuid)?;
        self.registry.names.remove(&profile.name);

        let owned: Vec<GroupName> = self
            .registry
            .groups
            .values()
            .filter(|g| g.owner == id)
            .map(|g| g.name.clone())
            .collect();
        for name in &owned {
            let group = self.registry.groups.remove(name).expect("listed above");
            let recipients = group.subscribers.into_iter().filter(|s| *s != id).collect();
            self.notify(recipients, EventKind::GroupDeleted, name.as_str());
        }
        for group in self.registry.groups.values_mut() {
            group.subscribers.remove(&id);
        }

        let remaining = self.registry.clients.keys().copied().collect();
        self.notify(remaining, EventKind::ClientLeft, profile.name.as_str());
        Ok(owned)
    }

    pub fn create_group(
        &mut self,
        requester: ClientId,
        name: GroupName,
        policy: BroadcastPolicy,
    ) -> HubResult<()> {
        self.require(requester)?;
        if self.registry.groups.contains_key(&name) {
            return Err(StatusCode::GroupAlreadyExists);
        }
        self.registry.groups.insert(
            name.clone(),
            Group {
                name: name.clone(),
                owner: requester,
                policy,
                subscribers: BTreeSet::new(),
            },
        );
        let everyone = self.registry.clients.keys().copied().collect();
        self.notify(everyone, EventKind::GroupCreated, name.as_str());
        Ok(())
    }

    pub fn delete_group(&mut self, requester: ClientId, name: &GroupName) -> HubResult<()> {
        self.require(requester)?;
        let group = self.registry.groups.get(name).ok_or(StatusCode::NoSuchGroup)?;
        if group.owner != requester {
            return Err(StatusCode::NotGroupOwner);
        }
        let group = self.registry.groups.remove(name).expect("checked above");
        self.notify(
            group.subscribers.into_iter().collect(),
            EventKind::GroupDeleted,
            name.as_str(),
        );
        Ok(())
    }

    /// Idempotent.
    pub fn subscribe(&mut self, requester: ClientId, name: &GroupName) -> HubResult<()> {
        self.require(requester)?;
        let group = self
            .registry
            .groups
            .get_mut(name)
            .ok_or(StatusCode::NoSuchGroup)?;
        group.subscribers.insert(requester);
        Ok(())
    }

    /// Idempotent; leaving a group one is not in is OK.
    pub fn unsubscribe(&mut self, requester: ClientId, name: &GroupName) -> HubResult<()> {
        self.require(requester)?;
        let group = self
            .registry
            .groups
            .get_mut(name)
            .ok_or(StatusCode::NoSuchGroup)?;
        group.subscribers.remove(&requester);
        Ok(())
    }

    pub fn route(&self, origin: ClientId, target: &Target) -> RoutingDecision {
        if let Err(code) = self.require(origin) {
            return RoutingDecision::err(code);
        }
        match target {
            Target::Uuid { id } => {
                if self.registry.clients.contains_key(id) {
                    RoutingDecision::ok(BTreeSet::from([*id]))
                } else {
                    RoutingDecision::err(StatusCode::NoSuchUuid)
                }
            }
            Target::Name { name } => match self.registry.names.get(name) {
                Some(id) => RoutingDecision::ok(BTreeSet::from([*id])),
                None => RoutingDecision::err(StatusCode::NoSuchName),
            },
            Target::Group { group } => match self.registry.groups.get(group) {
                None => RoutingDecision::err(StatusCode::NoSuchGroup),
                Some(g) if !g.permits(origin) => RoutingDecision::err(StatusCode::BadPermission),
                Some(g) => RoutingDecision::ok(
                    g.subscribers.iter().copied().filter(|s| *s != origin).collect(),
                ),
            },
            Target::All => RoutingDecision::ok(
                self.registry
                    .clients
                    .keys()
                    .copied()
                    .filter(|c| *c != origin)
                    .collect(),
            ),
        }
    }

    pub fn list(
        &self,
        requester: ClientId,
        what: FetchKind,
        group: Option<&GroupName>,
    ) -> HubResult<ListItems> {
        self.require(requester)?;
        Ok(match what {
            FetchKind::Clients => {
                ListItems::Profiles(self.registry.clients.values().cloned().collect())
            }
            FetchKind::Groups => ListItems::Groups(
                self.registry
                    .groups
                    .values()
                    .map(|g| GroupSummary {
                        name: g.name.clone(),
                        owner: self.registry.clients[&g.owner].name.clone(),
                        policy: g.policy,
                        subscribers: g.subscribers.len() as u64,
                    })
                    .collect(),
            ),
            FetchKind::Subscribers => {
                let name = group.ok_or(StatusCode::NoSuchGroup)?;
                let g = self
                    .registry
                    .groups
                    .get(name)
                    .ok_or(StatusCode::NoSuchGroup)?;
                ListItems::Profiles(
                    g.subscribers
                        .iter()
                        .map(|id| self.registry.clients[id].clone())
                        .collect(),
                )
            }
        })
    }

    fn require(&self, id: ClientId) -> HubResult<()> {
        if self.registry.clients.contains_key(&id) {
            Ok(())
        } else {
            Err(StatusCode::NotIdentified)
        }
    }

    fn notify(&mut self, recipients: Vec<ClientId>, kind: EventKind, subject: &str) {
        self.notices.push(Notice {
            recipients,
            frame: Frame::Event {
                kind,
                subject: subject.to_owned(),
            },
        });
    }
}

impl Registry {
    pub fn profile(&self, id: ClientId) -> Option<&ClientProfile> {
        self.clients.get(&id)
    }

    pub fn id_of(&self, name: &ClientName) -> Option<ClientId> {
        self.names.get(name).copied()
    }

    pub fn group(&self, name: &GroupName) -> Option<&Group> {
        self.groups.get(name)
    }

    pub fn clients(&self) -> impl Iterator<Item = &ClientProfile> {
        self.clients.values()
    }

    pub fn groups(&self) -> impl Iterator<Item = &Group> {
        self.groups.values()
    }

    pub fn client_count(&self) -> usize {
        self.clients.len()
    }

    /// Verifies the name/id bijection and that groups only reference
    /// connected clients.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.names.len() != self.clients.len() {
            return Err(format!(
                "{} names for {} clients",
                self.names.len(),
                self.clients.len()
            ));
        }
        for (id, profile) in &self.clients {
            if profile.id != *id {
                return Err(format!("profile keyed under {id} carries id {}", profile.id));
            }
            if self.names.get(&profile.name) != Some(id) {
                return Err(format!("name {} does not map back to {id}", profile.name));
            }
        }
        for group in self.groups.values() {
            if !self.clients.contains_key(&group.owner) {
                return Err(format!("group {} owned by departed client", group.name));
            }
            if let Some(s) = group.subscribers.iter().find(|s| !self.clients.contains_key(s)) {
                return Err(format!("group {} lists departed subscriber {s}", group.name));
            }
        }
        Ok(())
    }
}
