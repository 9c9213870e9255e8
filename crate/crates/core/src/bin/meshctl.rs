//! Command-line front end to the operator.
//!
//! Exit codes: 0 success or allow, 1 error, 2 policy deny,
//! 3 contract or obligation violation.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use datamesh::classification::{Obligation, Verdict};
use datamesh::enforcement::Mode;
use datamesh::enforcement::{PlatformSecret, SECRET_ENV};
use datamesh::mesh::Direction;
use datamesh::operator::{http, OperatorError, HOME_ENV};
use datamesh::policy::{compile_native, parse_policies, Action, NativeTarget, Subject};
use datamesh::store::StoreId;
use datamesh::{Operator, OperatorConfig, PortRef, ProductId};

const ALLOW: u8 = 0;
const ERROR: u8 = 1;
const DENY: u8 = 2;
const VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "meshctl", version, about = "Data mesh control plane")]
struct Cli {
    /// State directory holding the event log.
    #[arg(long, env = HOME_ENV, default_value = ".mesh", global = true)]
    home: PathBuf,
    /// Root for relative port addresses. Defaults to `<home>/data`.
    #[arg(long, env = "MESH_DATA_ROOT", global = true)]
    data_root: Option<PathBuf>,
    /// Name recorded as the actor of every event.
    #[arg(long, env = "MESH_ACTOR", default_value = "cli", global = true)]
    actor: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register, list, inspect and retire data products.
    #[command(subcommand)]
    Product(ProductCmd),
    /// Upstream or downstream closure of a product.
    Lineage {
        product: ProductId,
        #[arg(long, value_enum, default_value = "upstream")]
        direction: DirectionArg,
    },
    /// Sensitivity levels, tags and overrides.
    #[command(subcommand)]
    Classify(ClassifyCmd),
    #[command(subcommand)]
    Policy(PolicyCmd),
    #[command(subcommand)]
    Access(AccessCmd),
    /// Run a query through the gateway; prints CSV.
    Query {
        #[command(flatten)]
        subject: SubjectArgs,
        sql: String,
    },
    #[command(subcommand)]
    Token(TokenCmd),
    /// Request a port's data key (prints hex).
    Key {
        key_id: String,
        #[command(flatten)]
        subject: SubjectArgs,
    },
    #[command(subcommand)]
    Contracts(ContractsCmd),
    /// Delete every row about a data subject.
    Forget { subject: String },
    /// Search the catalog; an empty query matches everything.
    Search {
        #[arg(default_value = "")]
        query: String,
        #[arg(long)]
        label: Option<String>,
    },
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Event sequence and state hash.
    State,
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Subcommand)]
enum ProductCmd {
    /// Register one or more `.dp.json` descriptors, in order.
    Register {
        files: Vec<PathBuf>,
    },
    List,
    Show {
        product: ProductId,
    },
    Decommission {
        product: ProductId,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Subcommand)]
enum ClassifyCmd {
    /// Register a sensitivity level.
    Define {
        name: String,
        #[arg(long = "obligation", value_enum)]
        obligations: Vec<ObligationArg>,
        #[arg(long, default_value = "")]
        description: String,
    },
    /// Set an output port's declared labels (none clears them).
    Tag { port: PortRef, labels: Vec<String> },
    /// Propose replacing a port's labels.
    Override {
        port: PortRef,
        #[arg(long)]
        justification: String,
        labels: Vec<String>,
    },
    Review {
        id: u64,
        #[arg(value_enum)]
        verdict: VerdictArg,
    },
    /// List overrides.
    Overrides,
    /// Check a port against its labels' obligations; exits 3 on findings.
    Check { port: PortRef },
}

#[derive(Subcommand)]
enum PolicyCmd {
    /// Apply `.mpol` files.
    Apply {
        files: Vec<PathBuf>,
    },
    List,
    /// Evaluate a request with a full trace; exits 2 on deny.
    Explain {
        port: PortRef,
        #[command(flatten)]
        subject: SubjectArgs,
        #[arg(long, value_enum, default_value = "read")]
        action: ActionArg,
        #[arg(long)]
        column: Option<String>,
    },
    /// Compile a `.mpol` file into a blob-store bucket policy.
    Compile {
        file: PathBuf,
    },
}

#[derive(Subcommand)]
enum AccessCmd {
    /// Submit an access request; exits 2 on deny.
    Request {
        port: PortRef,
        #[command(flatten)]
        subject: SubjectArgs,
        #[arg(long, value_enum, default_value = "read")]
        action: ActionArg,
        #[arg(long, value_enum, default_value = "gateway")]
        mode: ModeArg,
        #[arg(long)]
        ttl: Option<u64>,
    },
}

#[derive(Subcommand)]
enum TokenCmd {
    /// Issue a direct-storage token; prints it on allow, exits 2 on deny.
    Issue {
        port: PortRef,
        #[command(flatten)]
        subject: SubjectArgs,
        #[arg(long, value_enum, default_value = "read")]
        action: ActionArg,
        #[arg(long)]
        ttl: Option<u64>,
    },
    /// Verify a token for a port; exits 2 unless valid.
    Verify { token: String, port: PortRef },
}

#[derive(Subcommand)]
enum ContractsCmd {
    /// Run the contracts on an output port; exits 3 on violations.
    Run { port: PortRef },
    /// Check the port's SLOs against its stored data; exits 3 on failures.
    Slo { port: PortRef },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Write a CSV file into a port's store (or a by_copy input's copy).
    Put {
        port: PortRef,
        file: PathBuf,
        #[arg(long)]
        copy: bool,
    },
    /// Print a store's plaintext.
    Cat {
        port: PortRef,
        #[arg(long)]
        copy: bool,
    },
}

#[derive(Args)]
struct SubjectArgs {
    #[arg(long)]
    user: String,
    #[arg(long = "role")]
    roles: Vec<String>,
    #[arg(long)]
    domain: Option<String>,
    /// `name=true|false`
    #[arg(long = "attr", value_parser = parse_attr)]
    attrs: Vec<(String, bool)>,
}

impl SubjectArgs {
    fn subject(&self) -> Subject {
        Subject {
            user: self.user.clone(),
            roles: self.roles.iter().cloned().collect(),
            domain: self.domain.clone(),
            attrs: self.attrs.iter().cloned().collect(),
        }
    }
}

fn parse_attr(s: &str) -> Result<(String, bool), String> {
    let (k, v) = s.split_once('=').ok_or("expected name=true|false")?;
    let v = v.parse().map_err(|_| format!("`{v}` is not true or false"))?;
    Ok((k.to_string(), v))
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum DirectionArg {
    Upstream,
    Downstream,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ActionArg {
    Read,
    Write,
    Manage,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Gateway,
    Token,
    Key,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum VerdictArg {
    Approve,
    Reject,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ObligationArg {
    EncryptAtRest,
    SubjectTraceability,
    InsiderAccessOnly,
}

impl From<ActionArg> for Action {
    fn from(a: ActionArg) -> Self {
        match a {
            ActionArg::Read => Action::Read,
            ActionArg::Write => Action::Write,
            ActionArg::Manage => Action::Manage,
        }
    }
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Gateway => Mode::Gateway,
            ModeArg::Token => Mode::Token,
            ModeArg::Key => Mode::Key,
        }
    }
}

impl From<ObligationArg> for Obligation {
    fn from(o: ObligationArg) -> Self {
        match o {
            ObligationArg::EncryptAtRest => Obligation::EncryptAtRest,
            ObligationArg::SubjectTraceability => Obligation::SubjectTraceability,
            ObligationArg::InsiderAccessOnly => Obligation::InsiderAccessOnly,
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

fn print<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable output"));
}

fn read(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.clone(),
        source,
    })
}

fn store_id(port: PortRef, copy: bool) -> StoreId {
    if copy {
        StoreId::Copy(port)
    } else {
        StoreId::Output(port)
    }
}

fn open(cli: &Cli) -> Result<Operator, CliError> {
    let secret = PlatformSecret::from_env().map_err(OperatorError::from)?;
    let mut config = OperatorConfig::new(&cli.home, secret);
    if let Some(root) = &cli.data_root {
        config = config.with_data_root(root);
    }
    Ok(Operator::open(config)?)
}

fn run(cli: Cli) -> Result<u8, CliError> {
    // Compilation needs neither state nor secret.
    if let Command::Policy(PolicyCmd::Compile { file }) = &cli.command {
        let op = if std::env::var_os(SECRET_ENV).is_some() {
            Some(open(&cli)?)
        } else {
            None
        };
        let graph = op.as_ref().map(|o| o.state().graph.clone()).unwrap_or_default();
        let mut out = Vec::new();
        for policy in parse_policies(&read(file)?).map_err(OperatorError::from)? {
            out.push(
                compile_native(&policy, &graph, NativeTarget::BlobStore).map_err(|e| CliError::Other(e.to_string()))?,
            );
        }
        print(&out);
        return Ok(ALLOW);
    }
    let op = open(&cli)?;
    let actor = cli.actor.as_str();
    match cli.command {
        Command::Product(cmd) => match cmd {
            ProductCmd::Register { files } => {
                for f in &files {
                    let id = op.register_descriptor_text(actor, &read(f)?)?;
                    println!("registered {id}");
                }
            }
            ProductCmd::List => {
                for entry in op.search_catalog("", None) {
                    println!("{}\t{:?}\t{}", entry.product, entry.archetype, entry.description);
                }
            }
            ProductCmd::Show { product } => {
                let state = op.state();
                let p = state
                    .graph
                    .get(&product)
                    .ok_or(OperatorError::Mesh(datamesh::mesh::MeshError::NotFound(
                        product.clone(),
                    )))?;
                let classification: Vec<_> = p
                    .output_ports
                    .iter()
                    .filter_map(|o| state.classification.get(&product.port(&o.id)))
                    .collect();
                print(&serde_json::json!({ "product": p, "classification": classification }));
            }
            ProductCmd::Decommission { product, force } => print(&op.decommission(actor, &product, force)?),
        },
        Command::Lineage { product, direction } => {
            let direction = match direction {
                DirectionArg::Upstream => Direction::Upstream,
                DirectionArg::Downstream => Direction::Downstream,
            };
            for id in op.lineage(&product, direction)? {
                println!("{id}");
            }
        }
        Command::Classify(cmd) => match cmd {
            ClassifyCmd::Define {
                name,
                obligations,
                description,
            } => print(&op.define_label(actor, &name, obligations.into_iter().map(Into::into), &description)?),
            ClassifyCmd::Tag { port, labels } => print(&op.tag_port(actor, &port, labels.into_iter().collect())?),
            ClassifyCmd::Override {
                port,
                justification,
                labels,
            } => print(&op.request_override(
                actor,
                &port,
                labels.into_iter().collect::<BTreeSet<_>>(),
                &justification,
            )?),
            ClassifyCmd::Review { id, verdict } => {
                let verdict = match verdict {
                    VerdictArg::Approve => Verdict::Approve,
                    VerdictArg::Reject => Verdict::Reject,
                };
                print(&op.review_override(actor, id, verdict)?)
            }
            ClassifyCmd::Overrides => print(&op.state().overrides.iter().collect::<Vec<_>>()),
            ClassifyCmd::Check { port } => {
                let report = op.compliance(&port)?;
                print(&report);
                if !report.compliant {
                    return Ok(VIOLATION);
                }
            }
        },
        Command::Policy(cmd) => match cmd {
            PolicyCmd::Apply { files } => {
                for f in &files {
                    for name in op.apply_policies(actor, &read(f)?)? {
                        println!("applied {name}");
                    }
                }
            }
            PolicyCmd::List => {
                for p in op.state().policies.iter() {
                    print!("{p}");
                }
            }
            PolicyCmd::Explain {
                port,
                subject,
                action,
                column,
            } => {
                let decision = op.decide(subject.subject(), action.into(), &port, column.as_deref(), true)?;
                print(&decision);
                if !decision.is_allow() {
                    return Ok(DENY);
                }
            }
            PolicyCmd::Compile { .. } => unreachable!("handled above"),
        },
        Command::Access(AccessCmd::Request {
            port,
            subject,
            action,
            mode,
            ttl,
        }) => {
            let outcome =
                op.submit_access_request(actor, &subject.subject(), &port, action.into(), mode.into(), ttl)?;
            print(&outcome);
            if outcome.grant.is_none() {
                return Ok(DENY);
            }
        }
        Command::Query { subject, sql } => {
            let outcome = op.query(actor, &subject.subject(), &sql)?;
            match outcome.grant() {
                Some(table) => print!("{}", String::from_utf8_lossy(&table.to_csv())),
                None => {
                    eprint!("denied");
                    let denied = &outcome.authorization().denied_columns;
                    if !denied.is_empty() {
                        eprint!(": columns {}", denied.join(", "));
                    }
                    eprintln!();
                    return Ok(DENY);
                }
            }
        }
        Command::Token(cmd) => match cmd {
            TokenCmd::Issue {
                port,
                subject,
                action,
                ttl,
            } => {
                let outcome = op.issue_token(actor, &subject.subject(), &port, action.into(), ttl)?;
                match outcome.grant {
                    Some(datamesh::operator::AccessGrant::Token(grant)) => println!("{}", grant.token.token),
                    _ => {
                        eprintln!("denied");
                        return Ok(DENY);
                    }
                }
            }
            TokenCmd::Verify { token, port } => {
                let v = op.verify_token(&token, &port);
                print(&v);
                if !v.is_valid() {
                    return Ok(DENY);
                }
            }
        },
        Command::Key { key_id, subject } => {
            let outcome = op.request_key(actor, &subject.subject(), &key_id)?;
            match outcome.grant() {
                Some(grant) => println!("{}", grant.key),
                None => {
                    eprintln!("denied");
                    return Ok(DENY);
                }
            }
        }
        Command::Contracts(cmd) => match cmd {
            ContractsCmd::Run { port } => {
                let report = op.run_contracts(actor, &port)?;
                print(&report);
                if report.alert_raised {
                    return Ok(VIOLATION);
                }
            }
            ContractsCmd::Slo { port } => {
                let results = op.check_slo(&port, None)?;
                print(&results);
                if results.iter().any(|r| !r.pass) {
                    return Ok(VIOLATION);
                }
            }
        },
        Command::Forget { subject } => print(&op.forget_subject(actor, &subject)?),
        Command::Search { query, label } => print(&op.search_catalog(&query, label.as_deref())),
        Command::Dataset(cmd) => match cmd {
            DatasetCmd::Put { port, file, copy } => {
                let bytes = std::fs::read(&file).map_err(|source| CliError::Read { path: file, source })?;
                op.put_dataset(&store_id(port, copy), &bytes)?;
            }
            DatasetCmd::Cat { port, copy } => match op.read_dataset(&store_id(port, copy))? {
                Some(bytes) => print!("{}", String::from_utf8_lossy(&bytes)),
                None => return Err(CliError::Other("store is empty".into())),
            },
        },
        Command::State => {
            let state = op.state();
            print(&serde_json::json!({ "seq": state.last_seq, "hash": state.hash() }));
        }
        Command::Serve { addr } => {
            tracing_subscriber::fmt()
                .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
                .init();
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(http::serve(Arc::new(op), addr))?;
        }
    }
    Ok(ALLOW)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ERROR)
        }
    }
}
