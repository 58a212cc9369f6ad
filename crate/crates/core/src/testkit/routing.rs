//! Brute-force routing model.
//!
//! [`Model`] tracks the registry with plain vectors and recomputes every
//! status code and recipient set by direct set algebra, sharing no code with
//! [`Hub`]. [`run_sequence`] drives a hub and a model side by side.

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::hub::Hub;
use crate::protocol::{
    BroadcastPolicy, ClientId, ClientKind, ClientName, FetchKind, GroupName, ListItems,
    StatusCode, Target,
};

pub const MAX_CLIENTS: usize = 8;
pub const MAX_GROUPS: usize = 4;

const CLIENT_NAMES: [&str; 10] = ["ana", "ben", "cy", "dee", "eli", "fay", "gus", "hal", "ivy", "jo"];
const GROUP_NAMES: [&str; MAX_GROUPS] = ["physics_engine", "planetary_sim", "lab", "lobby"];

#[derive(Debug, Clone)]
struct ModelGroup {
    name: String,
    owner: ClientId,
    policy: BroadcastPolicy,
    subscribers: Vec<ClientId>,
}

/// Independent registry model.
#[derive(Debug, Clone, Default)]
pub struct Model {
    clients: Vec<(ClientId, String)>,
    groups: Vec<ModelGroup>,
}

impl Model {
    fn has_client(&self, id: ClientId) -> bool {
        self.clients.iter().any(|(c, _)| *c == id)
    }

    fn group(&self, name: &str) -> Option<&ModelGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Recipients and status the routing rules prescribe.
    pub fn route(&self, origin: ClientId, target: &Target) -> (BTreeSet<ClientId>, StatusCode) {
        let none = BTreeSet::new();
        if !self.has_client(origin) {
            return (none, StatusCode::NotIdentified);
        }
        let all: BTreeSet<ClientId> = self.clients.iter().map(|(c, _)| *c).collect();
        match target {
            Target::Uuid { id } => {
                if all.contains(id) {
                    (BTreeSet::from([*id]), StatusCode::Ok)
                } else {
                    (none, StatusCode::NoSuchUuid)
                }
            }
            Target::Name { name } => {
                match self.clients.iter().find(|(_, n)| n == name.as_str()) {
                    Some((id, _)) => (BTreeSet::from([*id]), StatusCode::Ok),
                    None => (none, StatusCode::NoSuchName),
                }
            }
            Target::Group { group } => {
                let Some(g) = self.group(group.as_str()) else {
                    return (none, StatusCode::NoSuchGroup);
                };
                let subs: BTreeSet<ClientId> = g.subscribers.iter().copied().collect();
                let allowed = match g.policy {
                    BroadcastPolicy::OwnerOnly => origin == g.owner,
                    BroadcastPolicy::Subscribers => {
                        subs.union(&BTreeSet::from([g.owner])).any(|c| *c == origin)
                    }
                    BroadcastPolicy::Anyone => true,
                };
                if !allowed {
                    return (none, StatusCode::BadPermission);
                }
                let recipients = subs
                    .intersection(&all)
                    .copied()
                    .collect::<BTreeSet<_>>()
                    .difference(&BTreeSet::from([origin]))
                    .copied()
                    .collect();
                (recipients, StatusCode::Ok)
            }
            Target::All => (
                all.difference(&BTreeSet::from([origin])).copied().collect(),
                StatusCode::Ok,
            ),
        }
    }
}

/// One randomized operation.
#[derive(Debug, Clone)]
pub enum Op {
    Register(String, ClientKind),
    Unregister(ClientId),
    Create(ClientId, String, BroadcastPolicy),
    Delete(ClientId, String),
    Subscribe(ClientId, String),
    Unsubscribe(ClientId, String),
    Route(ClientId, Target),
    List(ClientId, FetchKind, Option<String>),
}

impl Op {
    pub fn label(&self) -> &'static str {
        match self {
            Op::Register(..) => "register",
            Op::Unregister(..) => "unregister",
            Op::Create(..) => "create_group",
            Op::Delete(..) => "delete_group",
            Op::Subscribe(..) => "subscribe",
            Op::Unsubscribe(..) => "unsubscribe",
            Op::Route(..) => "route",
            Op::List(..) => "list",
        }
    }
}

/// Counts from one checked sequence.
#[derive(Debug, Clone, Default)]
pub struct SequenceStats {
    pub ops: usize,
    pub route_checks: usize,
    /// (op label, status) pairs observed, in order.
    pub statuses: Vec<(&'static str, StatusCode)>,
}

fn policy(rng: &mut StdRng) -> BroadcastPolicy {
    match rng.random_range(0..3) {
        0 => BroadcastPolicy::OwnerOnly,
        1 => BroadcastPolicy::Subscribers,
        _ => BroadcastPolicy::Anyone,
    }
}

/// Some connected id, or occasionally a stranger.
fn pick_id(model: &Model, rng: &mut StdRng) -> ClientId {
    if model.clients.is_empty() || rng.random_bool(0.05) {
        ClientId::from_random_bytes(rng.random())
    } else {
        model.clients[rng.random_range(0..model.clients.len())].0
    }
}

fn pick_group(rng: &mut StdRng) -> String {
    GROUP_NAMES[rng.random_range(0..GROUP_NAMES.len())].to_owned()
}

/// Every target variant worth probing against the current model.
pub fn probe_targets(model: &Model, rng: &mut StdRng) -> Vec<Target> {
    let mut targets = vec![Target::All];
    for (id, name) in &model.clients {
        targets.push(Target::Uuid { id: *id });
        targets.push(Target::Name {
            name: name.parse().expect("pool names are valid"),
        });
    }
    for g in GROUP_NAMES {
        targets.push(Target::Group {
            group: g.parse().expect("pool names are valid"),
        });
    }
    targets.push(Target::Uuid {
        id: ClientId::from_random_bytes(rng.random()),
    });
    targets.push(Target::Name {
        name: "nobody_here".parse().unwrap(),
    });
    targets
}

fn random_op(model: &Model, rng: &mut StdRng, kind_for: impl Fn(usize) -> ClientKind) -> Op {
    loop {
        let op = match rng.random_range(0..100) {
            0..=19 => {
                if model.clients.len() >= MAX_CLIENTS {
                    continue;
                }
                let i = rng.random_range(0..CLIENT_NAMES.len());
                Op::Register(CLIENT_NAMES[i].to_owned(), kind_for(i))
            }
            20..=27 => Op::Unregister(pick_id(model, rng)),
            28..=39 => Op::Create(pick_id(model, rng), pick_group(rng), policy(rng)),
            40..=45 => Op::Delete(pick_id(model, rng), pick_group(rng)),
            46..=61 => Op::Subscribe(pick_id(model, rng), pick_group(rng)),
            62..=69 => Op::Unsubscribe(pick_id(model, rng), pick_group(rng)),
            70..=91 => {
                let targets = probe_targets(model, rng);
                let t = targets[rng.random_range(0..targets.len())].clone();
                Op::Route(pick_id(model, rng), t)
            }
            _ => {
                let what = match rng.random_range(0..3) {
                    0 => FetchKind::Clients,
                    1 => FetchKind::Groups,
                    _ => FetchKind::Subscribers,
                };
                Op::List(pick_id(model, rng), what, Some(pick_group(rng)))
            }
        };
        return op;
    }
}

fn gname(s: &str) -> GroupName {
    s.parse().expect("pool names are valid")
}

fn status_of(r: Result<(), StatusCode>) -> StatusCode {
    r.err().unwrap_or(StatusCode::Ok)
}

/// Applies `op` to both sides and compares. Returns the observed status.
pub fn apply_and_check(hub: &mut Hub, model: &mut Model, op: &Op) -> Result<StatusCode, String> {
    let mismatch = |what: &str, got: &dyn std::fmt::Debug, want: &dyn std::fmt::Debug| {
        Err(format!("{op:?}: {what} {got:?}, model expects {want:?}"))
    };
    let status = match op {
        Op::Register(name, kind) => {
            let want = if model.clients.iter().any(|(_, n)| n == name) {
                StatusCode::NameConflict
            } else {
                StatusCode::Ok
            };
            let got = hub.register_client(name.parse::<ClientName>().unwrap(), *kind, vec![]);
            match (&got, want) {
                (Ok(profile), StatusCode::Ok) => {
                    if model.has_client(profile.id) {
                        return Err(format!("{op:?}: reused id {}", profile.id));
                    }
                    model.clients.push((profile.id, name.clone()));
                    StatusCode::Ok
                }
                (Err(code), want) if *code == want => *code,
                _ => return mismatch("status", &got, &want),
            }
        }
        Op::Unregister(id) => {
            let want = if model.has_client(*id) {
                StatusCode::Ok
            } else {
                StatusCode::NoSuchUuid
            };
            let mut owned: Vec<String> = model
                .groups
                .iter()
                .filter(|g| g.owner == *id)
                .map(|g| g.name.clone())
                .collect();
            let got = hub.unregister_client(*id);
            let code = got.as_ref().err().copied().unwrap_or(StatusCode::Ok);
            if code != want {
                return mismatch("status", &code, &want);
            }
            if let Ok(deleted) = got {
                let mut deleted: Vec<String> = deleted.iter().map(|g| g.to_string()).collect();
                deleted.sort();
                owned.sort();
                if deleted != owned {
                    return mismatch("deleted groups", &deleted, &owned);
                }
                model.clients.retain(|(c, _)| c != id);
                model.groups.retain(|g| g.owner != *id);
                for g in &mut model.groups {
                    g.subscribers.retain(|s| s != id);
                }
            }
            code
        }
        Op::Create(id, name, pol) => {
            let want = if !model.has_client(*id) {
                StatusCode::NotIdentified
            } else if model.group(name).is_some() {
                StatusCode::GroupAlreadyExists
            } else {
                StatusCode::Ok
            };
            let got = status_of(hub.create_group(*id, gname(name), *pol));
            if got != want {
                return mismatch("status", &got, &want);
            }
            if got.is_ok() {
                model.groups.push(ModelGroup {
                    name: name.clone(),
                    owner: *id,
                    policy: *pol,
                    subscribers: vec![],
                });
            }
            got
        }
        Op::Delete(id, name) => {
            let want = match model.group(name) {
                _ if !model.has_client(*id) => StatusCode::NotIdentified,
                None => StatusCode::NoSuchGroup,
                Some(g) if g.owner != *id => StatusCode::NotGroupOwner,
                Some(_) => StatusCode::Ok,
            };
            let got = status_of(hub.delete_group(*id, &gname(name)));
            if got != want {
                return mismatch("status", &got, &want);
            }
            if got.is_ok() {
                model.groups.retain(|g| g.name != *name);
            }
            got
        }
        Op::Subscribe(id, name) | Op::Unsubscribe(id, name) => {
            let joining = matches!(op, Op::Subscribe(..));
            let want = if !model.has_client(*id) {
                StatusCode::NotIdentified
            } else if model.group(name).is_none() {
                StatusCode::NoSuchGroup
            } else {
                StatusCode::Ok
            };
            let got = if joining {
                status_of(hub.subscribe(*id, &gname(name)))
            } else {
                status_of(hub.unsubscribe(*id, &gname(name)))
            };
            if got != want {
                return mismatch("status", &got, &want);
            }
            if got.is_ok() {
                let g = model
                    .groups
                    .iter_mut()
                    .find(|g| g.name == *name)
                    .expect("checked");
                g.subscribers.retain(|s| s != id);
                if joining {
                    g.subscribers.push(*id);
                }
            }
            got
        }
        Op::Route(origin, target) => {
            let got = hub.route(*origin, target);
            let (recipients, status) = model.route(*origin, target);
            if got.status != status || got.recipients != recipients {
                return mismatch("route", &(got.status, &got.recipients), &(status, &recipients));
            }
            got.status
        }
        Op::List(id, what, group) => {
            let g = group.as_deref().map(gname);
            let got = hub.list(*id, *what, g.as_ref());
            let want: Result<usize, StatusCode> = if !model.has_client(*id) {
                Err(StatusCode::NotIdentified)
            } else {
                match what {
                    FetchKind::Clients => Ok(model.clients.len()),
                    FetchKind::Groups => Ok(model.groups.len()),
                    FetchKind::Subscribers => group
                        .as_deref()
                        .and_then(|n| model.group(n))
                        .map(|g| g.subscribers.len())
                        .ok_or(StatusCode::NoSuchGroup),
                }
            };
            let got_len = got.as_ref().map(ListItems::len).map_err(|e| *e);
            if got_len != want {
                return mismatch("list", &got_len, &want);
            }
            got.err().unwrap_or(StatusCode::Ok)
        }
    };
    Ok(status)
}

/// Cross-checks the hub's public view of its registry against the model.
pub fn check_registry(hub: &Hub, model: &Model) -> Result<(), String> {
    let reg = hub.registry();
    reg.check_invariants()?;
    let mut ids: Vec<ClientId> = reg.clients().map(|p| p.id).collect();
    let mut want: Vec<ClientId> = model.clients.iter().map(|(c, _)| *c).collect();
    ids.sort();
    want.sort();
    if ids != want {
        return Err(format!("client set {ids:?} != model {want:?}"));
    }
    for (id, name) in &model.clients {
        if reg.id_of(&name.parse().unwrap()) != Some(*id) {
            return Err(format!("name {name} does not resolve to {id}"));
        }
    }
    for g in &model.groups {
        let Some(hg) = reg.group(&gname(&g.name)) else {
            return Err(format!("group {} missing", g.name));
        };
        let subs: BTreeSet<ClientId> = g.subscribers.iter().copied().collect();
        if hg.owner != g.owner || hg.policy != g.policy || hg.subscribers != subs {
            return Err(format!("group {} diverged from model", g.name));
        }
    }
    if reg.groups().count() != model.groups.len() {
        return Err("group count diverged".into());
    }
    if reg.groups().count() > MAX_GROUPS || reg.client_count() > MAX_CLIENTS {
        return Err("registry exceeded generator bounds".into());
    }
    Ok(())
}

/// Runs one random sequence of `len` ops, checking every op against the model,
/// the registry invariants after every op, and the full origin × target
/// route matrix at the end.
pub fn run_sequence(
    seed: u64,
    len: usize,
    kind_for: impl Fn(usize) -> ClientKind + Copy,
) -> Result<SequenceStats, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut hub = Hub::seeded(seed);
    let mut model = Model::default();
    let mut stats = SequenceStats::default();
    for _ in 0..len {
        let op = random_op(&model, &mut rng, kind_for);
        let status = apply_and_check(&mut hub, &mut model, &op)?;
        stats.ops += 1;
        if matches!(op, Op::Route(..)) {
            stats.route_checks += 1;
        }
        stats.statuses.push((op.label(), status));
        hub.take_notices();
        check_registry(&hub, &model).map_err(|e| format!("after {op:?}: {e}"))?;
    }
    let mut origins: Vec<ClientId> = model.clients.iter().map(|(c, _)| *c).collect();
    origins.push(ClientId::from_random_bytes(rng.random()));
    for origin in origins {
        for target in probe_targets(&model, &mut rng) {
            apply_and_check(&mut hub, &mut model, &Op::Route(origin, target))?;
            stats.route_checks += 1;
        }
    }
    Ok(stats)
}

/// Status the routing rules prescribe for a GROUP send by each sender role.
pub fn expected_group_send(policy: BroadcastPolicy, role: SenderRole) -> StatusCode {
    use BroadcastPolicy::*;
    use SenderRole::*;
    match (policy, role) {
        (OwnerOnly, Owner) => StatusCode::Ok,
        (OwnerOnly, _) => StatusCode::BadPermission,
        (Subscribers, Owner | Subscriber) => StatusCode::Ok,
        (Subscribers, Outsider) => StatusCode::BadPermission,
        (Anyone, _) => StatusCode::Ok,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenderRole {
    Owner,
    Subscriber,
    Outsider,
}

/// Builds a hub with one group under `policy` and sends from each role.
/// Returns (policy, role, status, recipient count) rows.
pub fn permission_matrix() -> Vec<(BroadcastPolicy, SenderRole, StatusCode, usize)> {
    let mut rows = Vec::new();
    for policy in [
        BroadcastPolicy::OwnerOnly,
        BroadcastPolicy::Subscribers,
        BroadcastPolicy::Anyone,
    ] {
        let mut hub = Hub::seeded(99);
        let mut join = |n: &str| {
            hub.register_client(n.parse().unwrap(), ClientKind::User, vec![])
                .unwrap()
                .id
        };
        let owner = join("owner");
        let sub = join("subscriber");
        let other_sub = join("bystander");
        let outsider = join("outsider");
        let g = gname("lab");
        hub.create_group(owner, g.clone(), policy).unwrap();
        hub.subscribe(sub, &g).unwrap();
        hub.subscribe(other_sub, &g).unwrap();
        for (role, who) in [
            (SenderRole::Owner, owner),
            (SenderRole::Subscriber, sub),
            (SenderRole::Outsider, outsider),
        ] {
            let d = hub.route(who, &Target::Group { group: g.clone() });
            rows.push((policy, role, d.status, d.recipients.len()));
        }
    }
    rows
}
