//! Command-line driver: set a system up from a config, issue shares, plan
//! token runs, simulate broadcast episodes, verify invariants and replays,
//! revoke members, and print reports.
//!
//! Exit codes: 0 success, 1 internal error or failed verification, 2 schema
//! or usage violation in an input document, 3 infeasible target or
//! revocation, 4 corrupted plan.

mod output;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use output::{kv_table, Format, Table};
use tokenweave::bitcore::Variant;
use tokenweave::codebook::{check_rule1, unique_columns};
use tokenweave::formats::{
    read_json, write_json, ConfigDocument, LegacyPlanDocument, Operation, PlanDocument,
    StateDocument, TargetDocument, TranscriptDocument, TranscriptToken,
};
use tokenweave::gridscheme::digit_binary_row;
use tokenweave::planner::{delivery_points, token_construction, TokenClass, TokenPlan};
use tokenweave::simnet::{GridNetwork, GroupEntry, LegacyNetwork};

#[derive(Parser)]
#[command(name = "tokenweave", version, about = "Broadcast-token key distribution toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a system from a config file and write its state file.
    Setup {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        state: PathBuf,
        /// Seed override; beats TOKENWEAVE_SEED, which beats the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Print the shares the centre issues to each node.
    Shares {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Compute a token plan for a target and write it to a plan file.
    Plan {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Broadcast a plan's tokens, write the transcript, update the state.
    Simulate {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Target file; used to plan inline when no plan file is given, and
        /// its group layout, if any, is derived after the broadcasts.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Check system invariants, plan integrity, or transcript replay.
    Verify {
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Remove a member: burn what it knows, re-key its groups.
    Revoke {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        node: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Summarize a state or transcript as tables.
    Report {
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

struct Fail {
    code: u8,
    msg: String,
}

fn fail(code: u8, msg: impl Display) -> Fail {
    Fail { code, msg: msg.to_string() }
}

/// Input document problems: malformed files, fields that contradict the
/// variant, requests the state cannot honor.
fn schema<T>(r: tokenweave::Result<T>) -> Result<T, Fail> {
    r.map_err(|e| fail(2, e))
}

/// Targets that cannot be delivered on this system.
fn infeasible<T>(r: tokenweave::Result<T>) -> Result<T, Fail> {
    r.map_err(|e| fail(3, e))
}

/// Plan files that do not hold together.
fn corrupted<T>(r: tokenweave::Result<T>) -> Result<T, Fail> {
    r.map_err(|e| fail(4, format!("corrupted plan: {e}")))
}

/// Failures in our own machinery, not in the inputs.
fn internal<T>(r: tokenweave::Result<T>) -> Result<T, Fail> {
    r.map_err(|e| fail(1, e))
}

fn klabel(k: usize) -> String {
    format!("K{}", k + 1)
}

fn nlabel(n: usize) -> String {
    format!("N{}", n + 1)
}

fn keyset_cell(keys: impl IntoIterator<Item = usize>) -> String {
    let labels: Vec<String> = keys.into_iter().map(klabel).collect();
    if labels.is_empty() {
        "-".into()
    } else {
        labels.join(" ")
    }
}

fn nodeset_cell(nodes: impl IntoIterator<Item = usize>) -> String {
    nodes.into_iter().map(nlabel).collect::<Vec<_>>().join(" ")
}

fn class_cell(class: TokenClass) -> String {
    match class {
        TokenClass::Efficient => "efficient".into(),
        TokenClass::Inefficient => "inefficient".into(),
    }
}

fn groups_table(groups: &[GroupEntry]) -> Table {
    let mut t = Table::new(&["group", "members", "key", "value"]);
    for g in groups {
        t.row(vec![
            g.name.clone(),
            nodeset_cell(g.members.iter().copied()),
            g.expr.label(),
            g.value.clone(),
        ]);
    }
    t
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Fail> {
    match cli.cmd {
        Cmd::Setup { config, state, seed, format } => cmd_setup(&config, &state, seed, format),
        Cmd::Shares { state, format } => cmd_shares(&state, format),
        Cmd::Plan { state, target, plan, format } => cmd_plan(&state, &target, &plan, format),
        Cmd::Simulate { state, plan, target, transcript, format } => {
            cmd_simulate(&state, plan.as_deref(), target.as_deref(), &transcript, format)
        }
        Cmd::Verify { state, plan, transcript, format } => {
            cmd_verify(state.as_deref(), plan.as_deref(), transcript.as_deref(), format)
        }
        Cmd::Revoke { state, node, format } => cmd_revoke(&state, node, format),
        Cmd::Report { state, transcript, format } => {
            cmd_report(state.as_deref(), transcript.as_deref(), format)
        }
    }
}

fn env_seed() -> Result<Option<u64>, Fail> {
    match std::env::var("TOKENWEAVE_SEED") {
        Ok(s) => s
            .parse::<u64>()
            .map(Some)
            .map_err(|_| fail(2, format!("TOKENWEAVE_SEED must be an unsigned integer, got {s:?}"))),
        Err(_) => Ok(None),
    }
}

fn cmd_setup(
    config: &Path,
    state: &Path,
    seed: Option<u64>,
    format: Format,
) -> Result<(), Fail> {
    let cfg: ConfigDocument = schema(read_json(config))?;
    let seed = match seed {
        Some(s) => Some(s),
        None => env_seed()?,
    };
    let cfg = cfg.with_seed(seed);
    schema(cfg.validate())?;
    let nodes = match cfg.variant {
        Variant::Grid => schema(cfg.build_grid())?.nodes.len(),
        Variant::Legacy => schema(cfg.build_legacy())?.nodes.len(),
        Variant::Distance => schema(cfg.build_distance())?.node_count(),
    };
    let doc = StateDocument::new(cfg.clone());
    internal(write_json(state, &doc))?;
    let t = kv_table(&[
        ("variant", format!("{:?}", cfg.variant).to_lowercase()),
        ("keys", cfg.v.to_string()),
        ("key_bits", (2 * cfg.lp).to_string()),
        ("seed", cfg.rng_seed.to_string()),
        ("nodes", nodes.to_string()),
        ("state", state.display().to_string()),
    ]);
    print!("{}", t.render(format));
    Ok(())
}

fn cmd_shares(state: &Path, format: Format) -> Result<(), Fail> {
    let doc: StateDocument = schema(read_json(state))?;
    let t = match doc.config.variant {
        Variant::Grid => {
            let net = internal(doc.rebuild_grid())?;
            let mut t = Table::new(&["node", "codeword", "rows"]);
            for n in &net.nodes {
                t.row(vec![
                    nlabel(n.node),
                    n.codeword.iter().map(u64::to_string).collect::<Vec<_>>().join(" "),
                    n.rows.iter().map(|r| r.to_hex()).collect::<Vec<_>>().join(" "),
                ]);
            }
            t
        }
        Variant::Legacy => {
            let net = internal(doc.rebuild_legacy())?;
            let mut t = Table::new(&["node", "codebook_rows", "rows"]);
            for (i, rows) in net.assignments.iter().enumerate() {
                let hexes: Vec<String> = rows
                    .iter()
                    .map(|&r| internal(net.system.share_row(r)).map(|row| row.bits.to_hex()))
                    .collect::<Result<_, _>>()?;
                t.row(vec![
                    nlabel(i),
                    rows.iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
                    hexes.join(" "),
                ]);
            }
            t
        }
        Variant::Distance => {
            let sys = schema(doc.config.build_distance())?;
            let mut t = Table::new(&["node", "codeword", "row"]);
            for i in 0..sys.node_count() {
                t.row(vec![
                    nlabel(i),
                    sys.matrix[i].ascii(),
                    internal(sys.share_row(i))?.bits.to_hex(),
                ]);
            }
            t
        }
    };
    print!("{}", t.render(format));
    Ok(())
}

fn plan_table(plan: &TokenPlan) -> Table {
    let mut t = Table::new(&["token", "instances", "class", "orders"]);
    for (i, tok) in plan.tokens.iter().enumerate() {
        let orders: Vec<String> = tok
            .requests
            .iter()
            .map(|r| {
                let pts: Vec<String> =
                    r.points.iter().map(|p| format!("({},{})", p.x, p.y)).collect();
                format!("{} {}", klabel(r.key), pts.join(" "))
            })
            .collect();
        t.row(vec![
            format!("T{}", i + 1),
            tok.instances.to_string(),
            class_cell(tok.class),
            orders.join("; "),
        ]);
    }
    t
}

fn cmd_plan(state: &Path, target: &Path, plan_out: &Path, format: Format) -> Result<(), Fail> {
    let doc: StateDocument = schema(read_json(state))?;
    if doc.config.variant != Variant::Grid {
        return Err(fail(2, "token planning applies to grid systems"));
    }
    let net = internal(doc.rebuild_grid())?;
    let target: TargetDocument = schema(read_json(target))?;
    let pairs = infeasible(target.compile(&net))?;
    let points = infeasible(delivery_points(&net.centre, &pairs))?;
    let plan = infeasible(token_construction(net.centre.params.v, &points))?;
    internal(write_json(plan_out, &PlanDocument::from_plan(&plan)))?;
    print!("{}", plan_table(&plan).render(format));
    Ok(())
}

fn cmd_simulate(
    state: &Path,
    plan: Option<&Path>,
    target: Option<&Path>,
    transcript: &Path,
    format: Format,
) -> Result<(), Fail> {
    let doc: StateDocument = schema(read_json(state))?;
    match doc.config.variant {
        Variant::Grid => simulate_grid(doc, state, plan, target, transcript, format),
        Variant::Legacy => simulate_legacy(doc, state, plan, transcript, format),
        Variant::Distance => {
            Err(fail(2, "distance systems have no broadcast episodes to simulate"))
        }
    }
}

fn simulate_grid(
    mut doc: StateDocument,
    state: &Path,
    plan: Option<&Path>,
    target: Option<&Path>,
    transcript: &Path,
    format: Format,
) -> Result<(), Fail> {
    let mut net = internal(doc.rebuild_grid())?;
    let target_doc: Option<TargetDocument> = match target {
        Some(p) => Some(schema(read_json(p))?),
        None => None,
    };
    let plan: TokenPlan = match (plan, &target_doc) {
        (Some(p), _) => {
            let pd: PlanDocument =
                read_json(p).map_err(|e| fail(4, format!("corrupted plan: {e}")))?;
            corrupted(pd.validate(&net))?;
            pd.into_plan()
        }
        (None, Some(t)) => {
            let pairs = infeasible(t.compile(&net))?;
            let points = infeasible(delivery_points(&net.centre, &pairs))?;
            infeasible(token_construction(net.centre.params.v, &points))?
        }
        (None, None) => return Err(fail(2, "simulate needs --plan or --target")),
    };

    let mut steps = Vec::with_capacity(plan.tokens.len());
    for tok in &plan.tokens {
        let outcome = internal(net.broadcast(&tok.requests))?;
        doc.ops.push(Operation::Broadcast { requests: tok.requests.clone() });
        steps.push(TranscriptToken {
            token: outcome.token,
            instances: tok.instances,
            class: tok.class,
            unlocked: outcome.unlocked,
        });
    }
    if let Some(specs) = target_doc.as_ref().and_then(|t| t.groups.clone()) {
        infeasible(net.derive_groups(&specs).map(|_| ()))?;
        doc.ops.push(Operation::Groups { specs });
    }

    let tr = TranscriptDocument::capture(doc.config.clone(), &net, steps);
    internal(write_json(transcript, &tr))?;
    internal(write_json(state, &doc))?;

    let mut t = Table::new(&["token", "instances", "class", "unlocked"]);
    for (i, step) in tr.tokens.iter().enumerate() {
        let unlocked: Vec<String> = step
            .unlocked
            .iter()
            .map(|(n, ks)| format!("{} {}", nlabel(*n), keyset_cell(ks.iter().copied())))
            .collect();
        t.row(vec![
            format!("T{}", i + 1),
            step.instances.to_string(),
            class_cell(step.class),
            unlocked.join("; "),
        ]);
    }
    print!("{}", t.render(format));
    if !net.groups.is_empty() {
        println!();
        print!("{}", groups_table(&net.groups).render(format));
    }
    Ok(())
}

fn legacy_cumulative_table(net: &LegacyNetwork, per_broadcast: &[BTreeMap<usize, Vec<usize>>]) -> Table {
    let names: Vec<String> = (0..net.nodes.len()).map(nlabel).collect();
    let mut headers: Vec<&str> = vec!["token"];
    headers.extend(names.iter().map(String::as_str));
    let mut t = Table::new(&headers);
    let mut cumulative: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); net.nodes.len()];
    for (i, fresh) in per_broadcast.iter().enumerate() {
        for (&n, ks) in fresh {
            cumulative[n].extend(ks.iter().copied());
        }
        let mut row = vec![format!("T{}", i + 1)];
        row.extend(cumulative.iter().map(|ks| keyset_cell(ks.iter().copied())));
        t.row(row);
    }
    t
}

fn simulate_legacy(
    mut doc: StateDocument,
    state: &Path,
    plan: Option<&Path>,
    transcript: &Path,
    format: Format,
) -> Result<(), Fail> {
    let mut net = internal(doc.rebuild_legacy())?;
    let plan_path = plan.ok_or_else(|| fail(2, "legacy simulate needs --plan"))?;
    let pd: LegacyPlanDocument =
        read_json(plan_path).map_err(|e| fail(4, format!("corrupted plan: {e}")))?;
    let codewords = corrupted(pd.parsed())?;

    let mut per_broadcast = Vec::with_capacity(codewords.len());
    for cw in &codewords {
        per_broadcast.push(corrupted(net.broadcast(cw))?);
        doc.ops.push(Operation::LegacyBroadcast { codeword: cw.clone() });
    }

    let tr = tokenweave::formats::LegacyTranscriptDocument::capture(
        doc.config.clone(),
        &net,
        per_broadcast.clone(),
    );
    internal(write_json(transcript, &tr))?;
    internal(write_json(state, &doc))?;
    print!("{}", legacy_cumulative_table(&net, &per_broadcast).render(format));
    Ok(())
}

fn grid_suites(net: &GridNetwork, results: &mut Table) -> bool {
    let v = net.centre.params.v;
    let m = net.centre.params.m;
    let mut ok = true;
    let mut record = |name: &str, outcome: Result<String, String>| {
        match outcome {
            Ok(detail) => results.row(vec![name.into(), "ok".into(), detail]),
            Err(detail) => {
                ok = false;
                results.row(vec![name.into(), "FAIL".into(), detail]);
            }
        }
    };

    // Every digit column across all node code words carries every key-table
    // number the same number of times, so no column markets a key.
    let mut uniformity = Ok(format!("{} columns x {} nodes", 2 * v, v * v));
    'cols: for col in 0..2 * v {
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        for node in &net.nodes {
            *counts.entry(node.codeword[col]).or_default() += 1;
        }
        if counts.len() != v || counts.values().any(|&c| c != v) {
            uniformity = Err(format!("column {col} has skewed digit counts {counts:?}"));
            break 'cols;
        }
    }
    record("column uniformity", uniformity);

    let mut hiding = Ok(format!("{} node stacks", v * v));
    'nodes: for node in &net.nodes {
        let rows: Vec<_> = (0..m).map(|t| digit_binary_row(&node.codeword, m, t)).collect();
        match check_rule1(&rows) {
            Ok(true) => {}
            Ok(false) => {
                hiding = Err(format!("node {} stack has a unique column", node.node));
                break 'nodes;
            }
            Err(e) => {
                hiding = Err(e.to_string());
                break 'nodes;
            }
        }
    }
    record("share stack hiding", hiding);

    let mut mapping = Ok(format!("{} keys x {} nodes", v, v * v));
    'keys: for key in 0..v {
        let mut seen = HashSet::new();
        for i in 0..net.nodes.len() {
            match net.centre.key_coords(i, key) {
                Ok(p) => {
                    if !seen.insert((p.x, p.y)) {
                        mapping = Err(format!(
                            "{} lands on ({},{}) for two nodes",
                            klabel(key),
                            p.x,
                            p.y
                        ));
                        break 'keys;
                    }
                }
                Err(e) => {
                    mapping = Err(e.to_string());
                    break 'keys;
                }
            }
        }
    }
    record("coordinate uniqueness", mapping);
    ok
}

fn cmd_verify(
    state: Option<&Path>,
    plan: Option<&Path>,
    transcript: Option<&Path>,
    format: Format,
) -> Result<(), Fail> {
    if state.is_none() && plan.is_none() && transcript.is_none() {
        return Err(fail(2, "verify needs --state, --plan, or --transcript"));
    }
    let mut results = Table::new(&["suite", "result", "detail"]);
    let mut all_ok = true;
    let mut plan_failed = false;

    let state_doc: Option<StateDocument> = match state {
        Some(p) => Some(schema(read_json(p))?),
        None => None,
    };

    if let Some(doc) = &state_doc {
        match doc.config.variant {
            Variant::Grid => {
                let net = internal(doc.rebuild_grid())?;
                all_ok &= grid_suites(&net, &mut results);
            }
            Variant::Legacy => {
                let net = internal(doc.rebuild_legacy())?;
                match internal(unique_columns(&net.system.codebook))? {
                    cols if cols.is_empty() => results.row(vec![
                        "share stack hiding".into(),
                        "ok".into(),
                        format!("{} rows", net.system.codebook.len()),
                    ]),
                    cols => {
                        all_ok = false;
                        let at: Vec<String> =
                            cols.iter().map(|(c, _)| c.to_string()).collect();
                        results.row(vec![
                            "share stack hiding".into(),
                            "FAIL".into(),
                            format!("unique columns at {}", at.join(" ")),
                        ]);
                    }
                }
            }
            Variant::Distance => {
                let sys = schema(doc.config.build_distance())?;
                let v = sys.params.v;
                let mut bounds = Ok(String::new());
                let (mut lo, mut hi) = (usize::MAX, 0);
                for i in 0..sys.matrix.len() {
                    for j in i + 1..sys.matrix.len() {
                        let d = sys.matrix[i].hamming(&sys.matrix[j]);
                        lo = lo.min(d);
                        hi = hi.max(d);
                        if d < 4 || d > v - 4 {
                            bounds = Err(format!("rows {i},{j} at distance {d}"));
                        }
                    }
                }
                if let Ok(detail) = &mut bounds {
                    *detail = format!("distances span [{lo},{hi}] within [4,{}]", v - 4);
                }
                match bounds {
                    Ok(detail) => results.row(vec![
                        "pairwise distance bounds".into(),
                        "ok".into(),
                        detail,
                    ]),
                    Err(detail) => {
                        all_ok = false;
                        results.row(vec![
                            "pairwise distance bounds".into(),
                            "FAIL".into(),
                            detail,
                        ]);
                    }
                }
                match internal(check_rule1(&sys.matrix))? {
                    true => results.row(vec![
                        "share stack hiding".into(),
                        "ok".into(),
                        format!("{} rows", sys.matrix.len()),
                    ]),
                    false => {
                        all_ok = false;
                        results.row(vec![
                            "share stack hiding".into(),
                            "FAIL".into(),
                            "stack exposes a unique column".into(),
                        ]);
                    }
                }
            }
        }
    }

    if let Some(p) = plan {
        let doc = state_doc
            .as_ref()
            .ok_or_else(|| fail(2, "verifying a plan needs --state"))?;
        if doc.config.variant != Variant::Grid {
            return Err(fail(2, "plans apply to grid systems"));
        }
        let net = internal(doc.rebuild_grid())?;
        let outcome = read_json::<PlanDocument>(p)
            .and_then(|pd| pd.validate(&net).map(|()| pd));
        match outcome {
            Ok(pd) => results.row(vec![
                "plan integrity".into(),
                "ok".into(),
                format!("{} tokens, {} instances", pd.tokens.len(), pd.total_instances),
            ]),
            Err(e) => {
                all_ok = false;
                plan_failed = true;
                results.row(vec!["plan integrity".into(), "FAIL".into(), e.to_string()]);
            }
        }
    }

    if let Some(p) = transcript {
        let raw = schema(std::fs::read_to_string(p).map_err(tokenweave::Error::from))?;
        let outcome = if raw.contains("\"codewords\"") {
            serde_json::from_str::<tokenweave::formats::LegacyTranscriptDocument>(&raw)
                .map_err(|e| tokenweave::Error::Document(e.to_string()))
                .and_then(|doc| doc.verify_replay())
        } else {
            serde_json::from_str::<TranscriptDocument>(&raw)
                .map_err(|e| tokenweave::Error::Document(e.to_string()))
                .and_then(|doc| doc.verify_replay())
        };
        match outcome {
            Ok(()) => results.row(vec!["transcript replay".into(), "ok".into(), String::new()]),
            Err(e) => {
                all_ok = false;
                results.row(vec!["transcript replay".into(), "FAIL".into(), e.to_string()]);
            }
        }
    }

    print!("{}", results.render(format));
    if plan_failed {
        Err(fail(4, "plan verification failed"))
    } else if !all_ok {
        Err(fail(1, "verification failed"))
    } else {
        Ok(())
    }
}

fn cmd_revoke(state: &Path, node: usize, format: Format) -> Result<(), Fail> {
    let mut doc: StateDocument = schema(read_json(state))?;
    if doc.config.variant != Variant::Grid {
        return Err(fail(2, "revocation applies to grid systems"));
    }
    let mut net = internal(doc.rebuild_grid())?;
    let report = net.revoke(node).map_err(|e| match e {
        tokenweave::Error::GroupSpec(_) => fail(3, e),
        other => fail(2, other),
    })?;
    doc.ops.push(Operation::Revoke { leaver: node });
    internal(write_json(state, &doc))?;

    let mut t = Table::new(&["node", "retained"]);
    for (n, exprs) in &report.retained {
        let labels: Vec<String> = exprs.iter().map(|e| e.label()).collect();
        let cell = if labels.is_empty() { "-".to_string() } else { labels.join(" ") };
        t.row(vec![nlabel(*n), cell]);
    }
    print!("{}", t.render(format));
    if !report.groups.is_empty() {
        println!();
        print!("{}", groups_table(&report.groups).render(format));
    }
    Ok(())
}

fn cmd_report(
    state: Option<&Path>,
    transcript: Option<&Path>,
    format: Format,
) -> Result<(), Fail> {
    match (state, transcript) {
        (Some(p), None) => {
            let doc: StateDocument = schema(read_json(p))?;
            match doc.config.variant {
                Variant::Grid => {
                    let net = internal(doc.rebuild_grid())?;
                    let mut t = Table::new(&["node", "keys"]);
                    for &m in &net.members {
                        t.row(vec![
                            nlabel(m),
                            keyset_cell(net.nodes[m].unlocked_keys().into_iter()),
                        ]);
                    }
                    print!("{}", t.render(format));
                    if !net.groups.is_empty() {
                        println!();
                        print!("{}", groups_table(&net.groups).render(format));
                    }
                }
                Variant::Legacy => {
                    let net = internal(doc.rebuild_legacy())?;
                    let mut t = Table::new(&["node", "keys"]);
                    for (i, n) in net.nodes.iter().enumerate() {
                        t.row(vec![nlabel(i), keyset_cell(n.unlocked_keys().into_iter())]);
                    }
                    print!("{}", t.render(format));
                }
                Variant::Distance => {
                    return Err(fail(2, "distance systems have no episode state to report"))
                }
            }
            Ok(())
        }
        (None, Some(p)) => {
            let raw = schema(std::fs::read_to_string(p).map_err(tokenweave::Error::from))?;
            if raw.contains("\"codewords\"") {
                let doc: tokenweave::formats::LegacyTranscriptDocument =
                    schema(serde_json::from_str(&raw).map_err(|e| {
                        tokenweave::Error::Document(e.to_string())
                    }))?;
                let net = internal(doc.config.build_legacy())?;
                print!("{}", legacy_cumulative_table(&net, &doc.unlocked).render(format));
            } else {
                let doc: TranscriptDocument = schema(serde_json::from_str(&raw).map_err(|e| {
                    tokenweave::Error::Document(e.to_string())
                }))?;
                let mut t = Table::new(&["token", "instances", "class", "unlocked"]);
                for (i, step) in doc.tokens.iter().enumerate() {
                    let unlocked: Vec<String> = step
                        .unlocked
                        .iter()
                        .map(|(n, ks)| {
                            format!("{} {}", nlabel(*n), keyset_cell(ks.iter().copied()))
                        })
                        .collect();
                    t.row(vec![
                        format!("T{}", i + 1),
                        step.instances.to_string(),
                        class_cell(step.class),
                        unlocked.join("; "),
                    ]);
                }
                print!("{}", t.render(format));
                if !doc.groups.is_empty() {
                    println!();
                    print!("{}", groups_table(&doc.groups).render(format));
                }
            }
            Ok(())
        }
        _ => Err(fail(2, "report needs exactly one of --state or --transcript")),
    }
}
