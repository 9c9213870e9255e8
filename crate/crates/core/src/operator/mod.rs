//! The control plane: an event-sourced state machine behind one writer,
//! read through immutable snapshots, and exposed over HTTP and `meshctl`.

mod catalog;
mod clock;
pub mod events;
pub mod http;
mod state;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use catalog::{search_catalog, CatalogEntry, PortSummary};
pub use clock::{Clock, ManualClock, SystemClock};
pub use events::{Event, EventLog, EventRecord, LogError};
pub use state::{replay, MeshState};

use crate::classification::{
    check_obligations, forget_subject, ClassificationError, ClassificationState, ComplianceReport, DeletionReport,
    Obligation, OverrideRequest, SensitivityLabel, Verdict,
};
use crate::contracts::{check_slo, run_contracts, ContractError, ContractReport, Dataset, Observed, SloResult};
use crate::descriptor::{parse_descriptor, validate_descriptor, DescriptorError, ProductDescriptor};
use crate::enforcement::{
    fetch_with_token, verify_token, EnforcementError, KeyGrant, Mode, Outcome, PlatformSecret, PortAuthorization,
    SecretError, TokenGrant, Verification, DEFAULT_TTL_SECONDS,
};
use crate::mesh::{Direction, MeshError, PortRef, ProductId, RemovalReport};
use crate::policy::{
    parse_policies, serialize_policy, AccessRequest, Action, Decision, Effect, PolicyError, RuleId, Subject,
};
use crate::store::{load_table, FsStore, StoreError, StoreId, Table};

pub const HOME_ENV: &str = "MESH_HOME";

#[derive(Debug, thiserror::Error)]
pub enum OperatorError {
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Classification(#[from] ClassificationError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Enforcement(#[from] EnforcementError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Secret(#[from] SecretError),
    #[error("replay failed at sequence {seq}: {message}")]
    Replay { seq: u64, message: String },
    #[error("{0}")]
    BadRequest(String),
}

#[derive(Debug, Clone)]
pub struct OperatorConfig {
    /// State directory; holds `events.jsonl`.
    pub home: PathBuf,
    /// Relative port addresses resolve here.
    pub data_root: PathBuf,
    pub secret: PlatformSecret,
}

impl OperatorConfig {
    pub fn new(home: impl Into<PathBuf>, secret: PlatformSecret) -> Self {
        let home = home.into();
        OperatorConfig {
            data_root: home.join("data"),
            home,
            secret,
        }
    }

    pub fn with_data_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.data_root = root.into();
        self
    }

    /// `MESH_HOME` (default `.mesh`) and `MESH_SECRET` (required).
    pub fn from_env() -> Result<Self, OperatorError> {
        let home = std::env::var(HOME_ENV).unwrap_or_else(|_| ".mesh".to_string());
        Ok(Self::new(home, PlatformSecret::from_env()?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AccessGrant {
    /// The gateway will serve queries over these columns.
    Session {
        columns: Vec<String>,
    },
    Token(TokenGrant),
    /// Handle for the key service; material comes from `request_key`.
    Key {
        key_id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessOutcome {
    pub effect: Effect,
    pub mode: Mode,
    pub port: PortRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_rule: Option<RuleId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub denied_columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grant: Option<AccessGrant>,
    pub authorization: PortAuthorization,
}

/// One process's view of the mesh: a single serialized writer and
/// lock-free snapshot reads.
pub struct Operator {
    config: OperatorConfig,
    writer: Mutex<EventLog>,
    snapshot: RwLock<Arc<MeshState>>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Operator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Operator")
            .field("home", &self.config.home)
            .finish_non_exhaustive()
    }
}

type Committed<R> = (Vec<Event>, R);

fn access_event(auth: &PortAuthorization, subject: &Subject, mode: Mode) -> Event {
    Event::AccessDecided {
        subject: subject.clone(),
        port: auth.port.clone(),
        action: auth.action,
        mode,
        effect: auth.effect,
        matched_rule: auth.decisive().and_then(|d| d.matched_rule.clone()),
        denied_columns: auth.denied_columns.clone(),
        refused: None,
    }
}

fn refusal_event(subject: &Subject, port: &PortRef, action: Action, mode: Mode) -> Event {
    Event::AccessDecided {
        subject: subject.clone(),
        port: port.clone(),
        action,
        mode,
        effect: Effect::Deny,
        matched_rule: None,
        denied_columns: Vec::new(),
        refused: Some("untagged".to_string()),
    }
}

impl Operator {
    /// Opens the state directory and replays its log.
    pub fn open(config: OperatorConfig) -> Result<Self, OperatorError> {
        Self::open_with_clock(config, Arc::new(SystemClock))
    }

    pub fn open_with_clock(config: OperatorConfig, clock: Arc<dyn Clock>) -> Result<Self, OperatorError> {
        let log = EventLog::open(&config.home)?;
        let state = replay(log.records(), &config.secret)?;
        Ok(Operator {
            config,
            writer: Mutex::new(log),
            snapshot: RwLock::new(Arc::new(state)),
            clock,
        })
    }

    pub fn config(&self) -> &OperatorConfig {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    /// The current state. Cheap; never blocks on the writer.
    pub fn state(&self) -> Arc<MeshState> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn state_hash(&self) -> String {
        self.state().hash()
    }

    pub fn events(&self) -> Vec<EventRecord> {
        self.writer.lock().expect("writer lock").records().to_vec()
    }

    /// Runs `f` under the writer lock against the latest state, then applies
    /// and durably appends the events it returns before publishing the new
    /// snapshot.
    fn commit<R>(
        &self,
        actor: &str,
        f: impl FnOnce(&MeshState, u64) -> Result<Committed<R>, OperatorError>,
    ) -> Result<(R, Arc<MeshState>), OperatorError> {
        let mut log = self.writer.lock().expect("writer lock");
        let current = self.state();
        let now = self.clock.now();
        let (events, result) = f(&current, now)?;
        if events.is_empty() {
            return Ok((result, current));
        }
        let mut next = (*current).clone();
        let mut records = Vec::with_capacity(events.len());
        for event in events {
            let record = EventRecord {
                seq: next.last_seq + 1,
                ts: now,
                actor: actor.to_string(),
                event,
            };
            next.apply(&record, &self.config.secret)?;
            records.push(record);
        }
        for record in records {
            if let Err(e) = log.append(record) {
                // Publish whatever did reach the log.
                let partial = replay(log.records(), &self.config.secret)?;
                *self.snapshot.write().expect("snapshot lock") = Arc::new(partial);
                return Err(e.into());
            }
        }
        let next = Arc::new(next);
        *self.snapshot.write().expect("snapshot lock") = next.clone();
        Ok((result, next))
    }

    fn store<'a>(&'a self, state: &'a MeshState) -> FsStore<'a> {
        FsStore::new(&self.config.data_root, &state.graph, &state.keys)
    }

    pub fn define_label(
        &self,
        actor: &str,
        name: &str,
        obligations: impl IntoIterator<Item = Obligation>,
        description: &str,
    ) -> Result<SensitivityLabel, OperatorError> {
        let event = Event::LabelDefined {
            name: name.to_string(),
            obligations: obligations.into_iter().collect(),
            description: description.to_string(),
        };
        let ((), state) = self.commit(actor, |_, _| Ok((vec![event], ())))?;
        Ok(state.labels.get(name).cloned().expect("just defined"))
    }

    pub fn register_product(&self, actor: &str, descriptor: ProductDescriptor) -> Result<ProductId, OperatorError> {
        let errors = validate_descriptor(&descriptor);
        if !errors.is_empty() {
            return Err(MeshError::Invalid(errors).into());
        }
        let id = descriptor.product_id()?;
        self.commit(actor, |_, _| Ok((vec![Event::ProductRegistered { descriptor }], ())))?;
        Ok(id)
    }

    /// Parses `.dp.json` text and registers it.
    pub fn register_descriptor_text(&self, actor: &str, text: &str) -> Result<ProductId, OperatorError> {
        self.register_product(actor, parse_descriptor(text)?)
    }

    pub fn decommission(&self, actor: &str, product: &ProductId, force: bool) -> Result<RemovalReport, OperatorError> {
        let (report, _) = self.commit(actor, |state, _| {
            let report = state.graph.clone().decommission(product, force)?;
            Ok((
                vec![Event::ProductDecommissioned {
                    product: product.clone(),
                    force,
                }],
                report,
            ))
        })?;
        Ok(report)
    }

    pub fn lineage(&self, product: &ProductId, direction: Direction) -> Result<BTreeSet<ProductId>, OperatorError> {
        Ok(self.state().graph.lineage(product, direction)?)
    }

    pub fn tag_port(
        &self,
        actor: &str,
        port: &PortRef,
        labels: BTreeSet<String>,
    ) -> Result<ClassificationState, OperatorError> {
        let ((), state) = self.commit(actor, |state, _| {
            state.labels.ensure_registered(&labels)?;
            if state.graph.output_port(port).is_none() {
                return Err(ClassificationError::UnknownPort(port.clone()).into());
            }
            Ok((
                vec![Event::PortTagged {
                    port: port.clone(),
                    labels,
                }],
                (),
            ))
        })?;
        Ok(state.classification.get(port).cloned().expect("tagged port exists"))
    }

    pub fn request_override(
        &self,
        actor: &str,
        port: &PortRef,
        labels: BTreeSet<String>,
        justification: &str,
    ) -> Result<OverrideRequest, OperatorError> {
        let (request, _) = self.commit(actor, |state, now| {
            let current = state
                .classification
                .get(port)
                .ok_or_else(|| ClassificationError::UnknownPort(port.clone()))?;
            let mut queue = state.overrides.clone();
            let r = queue
                .request(current, &state.labels, labels.clone(), justification, actor, now)?
                .clone();
            Ok((
                vec![Event::OverrideRequested {
                    port: port.clone(),
                    labels,
                    justification: justification.to_string(),
                    id: r.id,
                    status: r.status,
                }],
                r,
            ))
        })?;
        Ok(request)
    }

    pub fn review_override(&self, actor: &str, id: u64, verdict: Verdict) -> Result<OverrideRequest, OperatorError> {
        let ((), state) = self.commit(actor, |state, now| {
            state.overrides.clone().review(id, verdict, actor, now)?;
            Ok((vec![Event::OverrideReviewed { id, verdict }], ()))
        })?;
        Ok(state.overrides.get(id).cloned().expect("reviewed override exists"))
    }

    /// Applies every policy in `.mpol` text; same-named policies are replaced.
    pub fn apply_policies(&self, actor: &str, text: &str) -> Result<Vec<String>, OperatorError> {
        let policies = parse_policies(text)?;
        let names = policies.iter().map(|p| p.name.clone()).collect();
        let events = policies
            .iter()
            .map(|p| Event::PolicyApplied {
                name: p.name.clone(),
                text: serialize_policy(p),
            })
            .collect();
        self.commit(actor, |_, _| Ok((events, ())))?;
        Ok(names)
    }

    /// Evaluates (or explains) a request without granting anything.
    pub fn decide(
        &self,
        subject: Subject,
        action: Action,
        port: &PortRef,
        column: Option<&str>,
        explain: bool,
    ) -> Result<Decision, OperatorError> {
        let state = self.state();
        let request = AccessRequest::resolve(&state.graph, &state.classification, subject, action, port, column)?;
        Ok(if explain {
            state.policies.explain(&request)
        } else {
            state.policies.evaluate(&request)
        })
    }

    /// Authorizes a request in the given mode and produces that mode's
    /// artifact on allow. Every call is audited, including refusals.
    pub fn submit_access_request(
        &self,
        actor: &str,
        subject: &Subject,
        port: &PortRef,
        action: Action,
        mode: Mode,
        ttl_seconds: Option<u64>,
    ) -> Result<AccessOutcome, OperatorError> {
        let (result, _) = self.commit(actor, |state, now| {
            let enforcer = state.enforcer();
            let output = state
                .graph
                .output_port(port)
                .ok_or_else(|| EnforcementError::Unresolved(port.to_string()))?;
            let auth = match enforcer.authorize(subject, action, port, None) {
                Ok(a) => a,
                Err(e @ EnforcementError::Untagged(_)) => {
                    return Ok((vec![refusal_event(subject, port, action, mode)], Err(e.into())));
                }
                Err(e) => return Err(e.into()),
            };
            let key_id = if mode == Mode::Key {
                if !output.encryption_enabled {
                    return Err(EnforcementError::EncryptionDisabled(port.clone()).into());
                }
                Some(
                    state
                        .keys
                        .active_key(port)
                        .ok_or_else(|| EnforcementError::NoKey(port.clone()))?
                        .key_id
                        .clone(),
                )
            } else {
                None
            };
            let mut events = vec![access_event(&auth, subject, mode)];
            let grant = if !auth.is_allow() {
                None
            } else {
                Some(match mode {
                    Mode::Gateway => AccessGrant::Session {
                        columns: output.schema.iter().map(|c| c.name.clone()).collect(),
                    },
                    Mode::Key => AccessGrant::Key {
                        key_id: key_id.expect("checked for key mode"),
                    },
                    Mode::Token => {
                        let outcome = enforcer.issue_token(
                            subject,
                            port,
                            action,
                            ttl_seconds.unwrap_or(DEFAULT_TTL_SECONDS),
                            now,
                            &self.config.secret,
                        )?;
                        let grant = outcome.grant().cloned().expect("authorized above");
                        events.push(Event::TokenIssued {
                            subject: subject.user.clone(),
                            port: port.clone(),
                            action,
                            expires_at: grant.token.payload.expires_at,
                            nonce: grant.token.payload.nonce.clone(),
                        });
                        AccessGrant::Token(grant)
                    }
                })
            };
            let outcome = AccessOutcome {
                effect: auth.effect,
                mode,
                port: port.clone(),
                matched_rule: auth.decisive().and_then(|d| d.matched_rule.clone()),
                denied_columns: auth.denied_columns.clone(),
                grant,
                authorization: auth,
            };
            Ok((events, Ok(outcome)))
        })?;
        result
    }

    /// Issues a direct-storage token; shorthand for a token-mode access request.
    pub fn issue_token(
        &self,
        actor: &str,
        subject: &Subject,
        port: &PortRef,
        action: Action,
        ttl_seconds: Option<u64>,
    ) -> Result<AccessOutcome, OperatorError> {
        self.submit_access_request(actor, subject, port, action, Mode::Token, ttl_seconds)
    }

    /// What a storage node runs before serving a token holder.
    pub fn verify_token(&self, token: &str, port: &PortRef) -> Verification {
        verify_token(token, port, self.clock.now(), &self.config.secret)
    }

    /// Verifies the token, then returns the port's bytes exactly as stored.
    pub fn fetch_with_token(
        &self,
        token: &str,
        port: &PortRef,
    ) -> Result<Result<Vec<u8>, Verification>, OperatorError> {
        let state = self.state();
        Ok(fetch_with_token(
            &self.store(&state),
            token,
            port,
            self.clock.now(),
            &self.config.secret,
        )?)
    }

    /// Hands out a data key if the subject may read its port.
    pub fn request_key(
        &self,
        actor: &str,
        subject: &Subject,
        key_id: &str,
    ) -> Result<Outcome<KeyGrant>, OperatorError> {
        let (result, _) = self.commit(actor, |state, _| {
            let port = state
                .keys
                .get(key_id)
                .ok_or_else(|| EnforcementError::UnknownKey(key_id.to_string()))?
                .port
                .clone();
            match state.enforcer().request_key(subject, &state.keys, key_id) {
                Ok(outcome) => {
                    let mut events = vec![access_event(outcome.authorization(), subject, Mode::Key)];
                    if let Some(grant) = outcome.grant() {
                        events.push(Event::KeyHandedOut {
                            subject: subject.user.clone(),
                            key_id: grant.key_id.clone(),
                            port: grant.port.clone(),
                        });
                    }
                    Ok((events, Ok(outcome)))
                }
                Err(e @ EnforcementError::Untagged(_)) => Ok((
                    vec![refusal_event(subject, &port, Action::Read, Mode::Key)],
                    Err(e.into()),
                )),
                Err(e) => Err(e.into()),
            }
        })?;
        result
    }

    /// Runs a query through the gateway.
    pub fn query(&self, actor: &str, subject: &Subject, sql: &str) -> Result<Outcome<Table>, OperatorError> {
        let (result, _) = self.commit(actor, |state, _| {
            let store = self.store(state);
            match state.enforcer().gateway_query(subject, sql, &store) {
                Ok(outcome) => Ok((
                    vec![access_event(outcome.authorization(), subject, Mode::Gateway)],
                    Ok(outcome),
                )),
                Err(EnforcementError::Untagged(port)) => Ok((
                    vec![refusal_event(subject, &port, Action::Read, Mode::Gateway)],
                    Err(EnforcementError::Untagged(port).into()),
                )),
                Err(e) => Err(e.into()),
            }
        })?;
        result
    }

    /// Writes a dataset into a managed store, encrypting it if the port
    /// requires it. Data-plane writes are not part of the event log.
    pub fn put_dataset(&self, store: &StoreId, bytes: &[u8]) -> Result<(), OperatorError> {
        let _guard = self.writer.lock().expect("writer lock");
        let state = self.state();
        use crate::store::DatasetStore;
        self.store(&state).save(store, bytes)?;
        Ok(())
    }

    /// Plaintext of a managed store.
    pub fn read_dataset(&self, store: &StoreId) -> Result<Option<Vec<u8>>, OperatorError> {
        let state = self.state();
        use crate::store::DatasetStore;
        Ok(self.store(&state).load(store)?)
    }

    /// Bytes of a managed store exactly as they sit on disk.
    pub fn raw_dataset(&self, store: &StoreId) -> Result<Option<Vec<u8>>, OperatorError> {
        let state = self.state();
        Ok(self.store(&state).load_raw(store)?)
    }

    fn dataset(&self, state: &MeshState, port: &PortRef) -> Result<Dataset, OperatorError> {
        use crate::store::DatasetStore;
        let store = self.store(state);
        let id = StoreId::Output(port.clone());
        let table = load_table(&store, &id)
            .map_err(|e| ContractError::Unreadable(port.clone(), e.to_string()))?
            .unwrap_or_default();
        Ok(Dataset {
            table,
            last_updated: store.last_modified(&id),
        })
    }

    /// Runs every contract registered on an output port against its data.
    pub fn run_contracts(&self, actor: &str, port: &PortRef) -> Result<ContractReport, OperatorError> {
        let (report, _) = self.commit(actor, |state, now| {
            if state.graph.output_port(port).is_none() {
                return Err(ContractError::UnknownPort(port.clone()).into());
            }
            let dataset = self.dataset(state, port)?;
            let report = run_contracts(port, &state.contracts.for_port(port), &dataset, now);
            Ok((vec![Event::ContractRun { report: report.clone() }], report))
        })?;
        Ok(report)
    }

    /// Checks a port's SLOs against metrics observed from its store, or
    /// against `observed` when given.
    pub fn check_slo(&self, port: &PortRef, observed: Option<Observed>) -> Result<Vec<SloResult>, OperatorError> {
        let state = self.state();
        let observed = match observed {
            Some(o) => o,
            None if state.graph.output_port(port).is_some() => Observed::from_dataset(&self.dataset(&state, port)?),
            None => Observed::default(),
        };
        Ok(check_slo(&state.graph, port, &observed, self.clock.now())?)
    }

    pub fn compliance(&self, port: &PortRef) -> Result<ComplianceReport, OperatorError> {
        let state = self.state();
        Ok(check_obligations(
            &state.graph,
            &state.classification,
            &state.labels,
            port,
        )?)
    }

    /// Deletes every row referencing `subject` from subject-traceable stores.
    pub fn forget_subject(&self, actor: &str, subject: &str) -> Result<DeletionReport, OperatorError> {
        let (report, _) = self.commit(actor, |state, _| {
            let store = self.store(state);
            let report = forget_subject(&state.graph, &state.classification, &state.labels, &store, subject)?;
            Ok((
                vec![Event::SubjectForgotten {
                    subject_sha256: hex::encode(Sha256::digest(subject.as_bytes())),
                    report: report.clone(),
                }],
                report,
            ))
        })?;
        Ok(report)
    }

    pub fn search_catalog(&self, query: &str, label: Option<&str>) -> Vec<CatalogEntry> {
        search_catalog(&self.state(), query, label)
    }
}
