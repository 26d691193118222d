//! Scenario file format.
//!
//! Line oriented. The first non-comment line is `format = 1`; after it come
//! `[section]` headers followed by `key = value` lines. `#` starts a comment
//! and integers may contain `_` separators.
//!
//! ```text
//! [simulation]   seed, stop_at_ns
//! [dataset]      kind (two-gaussians | xor | file), features, classes, spread, path
//! [terminal]     samples_to_send, inter_send_gap_ns, start_ns
//! [edge]         cache_capacity, sufficiency_threshold, collect_window_ns,
//!                reply_timeout_ns, compute_ns_per_sample_epoch, model (mlp | lenet),
//!                hidden, output, scaling, lenet_input, loss, learning_rate,
//!                batch_size, max_epochs, loss_goal
//! [data-center]  evaluation_samples
//! [node N]       role, cache_capacity, sufficiency_threshold, neighbors, target,
//!                samples_to_send   (repeated; ids contiguous from 0)
//! [link]         a, b, rate_bps, delay_ns, queue_capacity   (repeated)
//! ```
//!
//! The `[terminal]` and `[edge]` sections hold defaults that `[node N]`
//! sections may override per node.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use crate::dl::{
    build_lenet, Activation, LossIndex, NetworkSpec, OutputKind, Sgd, TrainingStrategy,
};

pub const CONFIG_FORMAT_HEADER: &str = "format = 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Terminal,
    Edge,
    Gateway,
    DataCenter,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Terminal => "terminal",
            Role::Edge => "edge",
            Role::Gateway => "gateway",
            Role::DataCenter => "data-center",
        }
    }

    fn parse(s: &str) -> Option<Role> {
        [Role::Terminal, Role::Edge, Role::Gateway, Role::DataCenter]
            .into_iter()
            .find(|r| r.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetKind {
    TwoGaussians,
    Xor,
    /// Comma-separated rows of `features + classes` values.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub features: usize,
    /// Target columns; one-hot width for generated classes.
    pub classes: usize,
    /// Standard deviation of the generated noise.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalDefaults {
    pub samples_to_send: u32,
    pub inter_send_gap_ns: u64,
    pub start_ns: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    Mlp {
        hidden: Vec<(usize, Activation)>,
        output: OutputKind,
        scaling: bool,
    },
    LeNet {
        height: usize,
        width: usize,
        channels: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDefaults {
    pub cache_capacity: usize,
    pub sufficiency_threshold: usize,
    pub collect_window_ns: u64,
    pub reply_timeout_ns: u64,
    pub compute_ns_per_sample_epoch: u64,
    pub model: ModelConfig,
    pub loss: LossIndex,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub loss_goal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterConfig {
    /// Size of the held-out evaluation set; 0 disables evaluation.
    pub evaluation_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub id: u32,
    pub role: Role,
    pub cache_capacity: Option<usize>,
    pub sufficiency_threshold: Option<usize>,
    pub neighbors: Option<Vec<u32>>,
    pub target: Option<u32>,
    pub samples_to_send: Option<u32>,
}

impl NodeConfig {
    pub fn new(id: u32, role: Role) -> Self {
        NodeConfig {
            id,
            role,
            cache_capacity: None,
            sufficiency_threshold: None,
            neighbors: None,
            target: None,
            samples_to_send: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub a: u32,
    pub b: u32,
    pub rate_bps: u64,
    pub delay_ns: u64,
    pub queue_capacity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub stop_at_ns: u64,
    pub dataset: DatasetConfig,
    pub terminal: TerminalDefaults,
    pub edge: EdgeDefaults,
    pub center: CenterConfig,
    pub nodes: Vec<NodeConfig>,
    pub links: Vec<LinkSpec>,
}

/// One validation failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    /// Dotted field path, e.g. `node 4.target`.
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Every validation failure found in a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_char('\n')?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::TwoGaussians,
            features: 2,
            classes: 2,
            spread: 0.75,
        }
    }
}

impl Default for TerminalDefaults {
    fn default() -> Self {
        TerminalDefaults {
            samples_to_send: 50,
            inter_send_gap_ns: 1_000_000,
            start_ns: 1_000_000_000,
        }
    }
}

impl Default for EdgeDefaults {
    fn default() -> Self {
        EdgeDefaults {
            cache_capacity: 100,
            sufficiency_threshold: 100,
            collect_window_ns: 2_000_000_000,
            reply_timeout_ns: 100_000_000,
            compute_ns_per_sample_epoch: 1_000,
            model: ModelConfig::Mlp {
                hidden: vec![(8, Activation::Tanh)],
                output: OutputKind::Softmax,
                scaling: true,
            },
            loss: LossIndex::CrossEntropy,
            learning_rate: 0.1,
            batch_size: 10,
            max_epochs: 50,
            loss_goal: 0.05,
        }
    }
}

impl EdgeDefaults {
    pub fn network_spec(&self, inputs: usize, outputs: usize) -> NetworkSpec {
        match &self.model {
            ModelConfig::Mlp {
                hidden,
                output,
                scaling,
            } => NetworkSpec::Mlp {
                inputs,
                hidden: hidden.clone(),
                outputs,
                output: *output,
                scaling: *scaling,
            },
            ModelConfig::LeNet {
                height,
                width,
                channels,
            } => NetworkSpec::LeNet {
                height: *height,
                width: *width,
                channels: *channels,
                classes: outputs,
            },
        }
    }

    /// The strategy before the per-node seed is filled in.
    pub fn strategy(&self) -> TrainingStrategy {
        TrainingStrategy {
            loss: self.loss,
            optimizer: Sgd {
                learning_rate: self.learning_rate,
                batch_size: self.batch_size,
            },
            max_epochs: self.max_epochs,
            loss_goal: self.loss_goal,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn node(&self, id: u32) -> Option<&NodeConfig> {
        self.nodes.get(id as usize).filter(|n| n.id == id)
    }

    pub fn nodes_with_role(&self, role: Role) -> impl Iterator<Item = &NodeConfig> {
        self.nodes.iter().filter(move |n| n.role == role)
    }

    pub fn cache_capacity(&self, node: &NodeConfig) -> usize {
        node.cache_capacity.unwrap_or(self.edge.cache_capacity)
    }

    pub fn sufficiency_threshold(&self, node: &NodeConfig) -> usize {
        node.sufficiency_threshold
            .unwrap_or(self.edge.sufficiency_threshold)
    }

    pub fn samples_to_send(&self, node: &NodeConfig) -> u32 {
        node.samples_to_send
            .unwrap_or(self.terminal.samples_to_send)
    }

    /// Every constraint violation, in a stable order.
    pub fn validate(&self) -> Vec<ConfigError> {
        let mut errs = Vec::new();
        let mut err = |field: String, message: String| {
            errs.push(ConfigError {
                line: None,
                field,
                message,
            })
        };
        if self.stop_at_ns == 0 {
            err("simulation.stop_at_ns".into(), "must be > 0".into());
        }

        let d = &self.dataset;
        if d.features == 0 {
            err("dataset.features".into(), "must be >= 1".into());
        }
        if d.classes == 0 {
            err("dataset.classes".into(), "must be >= 1".into());
        }
        if !(d.spread >= 0.0 && d.spread.is_finite()) {
            err(
                "dataset.spread".into(),
                "must be a finite value >= 0".into(),
            );
        }
        match d.kind {
            DatasetKind::TwoGaussians if d.classes < 2 => err(
                "dataset.classes".into(),
                "two-gaussians needs at least 2 classes".into(),
            ),
            DatasetKind::Xor if d.features != 2 || d.classes != 1 => err(
                "dataset.kind".into(),
                "xor rows have 2 features and 1 target; set features = 2 and classes = 1".into(),
            ),
            _ => {}
        }

        let e = &self.edge;
        if e.cache_capacity == 0 {
            err("edge.cache_capacity".into(), "must be >= 1".into());
        }
        if e.sufficiency_threshold == 0 {
            err("edge.sufficiency_threshold".into(), "must be >= 1".into());
        }
        if !(e.learning_rate > 0.0 && e.learning_rate.is_finite()) {
            err("edge.learning_rate".into(), "must be > 0".into());
        }
        if e.batch_size == 0 {
            err("edge.batch_size".into(), "must be >= 1".into());
        }
        if e.max_epochs == 0 {
            err("edge.max_epochs".into(), "must be >= 1".into());
        }
        if e.loss_goal.is_nan() {
            err("edge.loss_goal".into(), "must be a number".into());
        }
        match &e.model {
            ModelConfig::Mlp { hidden, output, .. } => {
                if hidden.iter().any(|(w, _)| *w == 0) {
                    err("edge.hidden".into(), "layer widths must be >= 1".into());
                }
                if e.loss == LossIndex::CrossEntropy && *output != OutputKind::Softmax {
                    err(
                        "edge.loss".into(),
                        "cross_entropy needs output = softmax".into(),
                    );
                }
                if *output == OutputKind::Softmax && d.classes < 2 {
                    err(
                        "edge.output".into(),
                        "softmax needs at least 2 classes".into(),
                    );
                }
            }
            ModelConfig::LeNet {
                height,
                width,
                channels,
            } => {
                if height * width * channels != d.features {
                    err(
                        "edge.lenet_input".into(),
                        format!(
                            "{height}x{width}x{channels} does not match {} dataset features",
                            d.features
                        ),
                    );
                } else if let Err(x) = build_lenet(*height, *width, *channels, d.classes.max(1)) {
                    err("edge.lenet_input".into(), x.to_string());
                }
                if d.classes < 2 {
                    err(
                        "edge.model".into(),
                        "lenet ends in softmax and needs at least 2 classes".into(),
                    );
                }
            }
        }

        for (i, n) in self.nodes.iter().enumerate() {
            if n.id as usize != i {
                err(
                    format!("node {}", n.id),
                    format!("node ids must be contiguous from 0; expected node {i}"),
                );
            }
        }
        let role_of: HashMap<u32, Role> = self.nodes.iter().map(|n| (n.id, n.role)).collect();
        let centers: Vec<u32> = self
            .nodes_with_role(Role::DataCenter)
            .map(|n| n.id)
            .collect();
        match centers.len() {
            0 => err(
                "nodes".into(),
                "exactly one data-center node is required, found none".into(),
            ),
            1 => {}
            _ => err(
                "nodes".into(),
                format!(
                    "exactly one data-center node is required, found nodes {}",
                    join(&centers)
                ),
            ),
        }
        for n in &self.nodes {
            let at = |f: &str| format!("node {}.{f}", n.id);
            match (n.role, n.target) {
                (Role::Terminal, None) => {
                    err(at("target"), "terminals need a target edge node".into())
                }
                (Role::Terminal, Some(t)) if role_of.get(&t) != Some(&Role::Edge) => err(
                    at("target"),
                    match role_of.get(&t) {
                        Some(r) => format!("target node {t} is a {}, not an edge node", r.as_str()),
                        None => format!("target node {t} is not declared"),
                    },
                ),
                (Role::Terminal, _) => {}
                (_, Some(_)) => err(at("target"), "only terminals have a target".into()),
                _ => {}
            }
            if n.role != Role::Terminal && n.samples_to_send.is_some() {
                err(at("samples_to_send"), "only terminals send samples".into());
            }
            if n.role != Role::Edge {
                for (f, set) in [
                    ("cache_capacity", n.cache_capacity.is_some()),
                    ("sufficiency_threshold", n.sufficiency_threshold.is_some()),
                    ("neighbors", n.neighbors.is_some()),
                ] {
                    if set {
                        err(at(f), "only edge nodes take this field".into());
                    }
                }
            }
            if n.cache_capacity == Some(0) {
                err(at("cache_capacity"), "must be >= 1".into());
            }
            if n.sufficiency_threshold == Some(0) {
                err(at("sufficiency_threshold"), "must be >= 1".into());
            }
            for &nb in n.neighbors.iter().flatten() {
                if nb == n.id {
                    err(at("neighbors"), "a node cannot be its own neighbor".into());
                } else if role_of.get(&nb) != Some(&Role::Edge) {
                    err(
                        at("neighbors"),
                        format!("neighbor {nb} is not a declared edge node"),
                    );
                }
            }
        }

        for (i, l) in self.links.iter().enumerate() {
            let at = |f: &str| format!("link {i}.{f}");
            for (f, end) in [("a", l.a), ("b", l.b)] {
                if !role_of.contains_key(&end) {
                    err(
                        at(f),
                        format!("dangling endpoint: node {end} is not declared"),
                    );
                }
            }
            if l.a == l.b {
                err(at("b"), "a link needs two distinct endpoints".into());
            }
            if l.rate_bps == 0 {
                err(at("rate_bps"), "must be > 0".into());
            }
        }
        errs
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut w = |line: String| {
            out.push_str(&line);
            out.push('\n');
        };
        w(CONFIG_FORMAT_HEADER.into());
        w(String::new());
        w("[simulation]".into());
        w(format!("seed = {}", self.seed));
        w(format!("stop_at_ns = {}", group(self.stop_at_ns)));
        w(String::new());

        let d = &self.dataset;
        w("[dataset]".into());
        match &d.kind {
            DatasetKind::TwoGaussians => w("kind = two-gaussians".into()),
            DatasetKind::Xor => w("kind = xor".into()),
            DatasetKind::File(p) => {
                w("kind = file".into());
                w(format!("path = {}", p.display()));
            }
        }
        w(format!("features = {}", d.features));
        w(format!("classes = {}", d.classes));
        w(format!("spread = {:?}", d.spread));
        w(String::new());

        let t = &self.terminal;
        w("[terminal]".into());
        w(format!("samples_to_send = {}", t.samples_to_send));
        w(format!(
            "inter_send_gap_ns = {}",
            group(t.inter_send_gap_ns)
        ));
        w(format!("start_ns = {}", group(t.start_ns)));
        w(String::new());

        let e = &self.edge;
        w("[edge]".into());
        w(format!("cache_capacity = {}", e.cache_capacity));
        w(format!(
            "sufficiency_threshold = {}",
            e.sufficiency_threshold
        ));
        w(format!(
            "collect_window_ns = {}",
            group(e.collect_window_ns)
        ));
        w(format!("reply_timeout_ns = {}", group(e.reply_timeout_ns)));
        w(format!(
            "compute_ns_per_sample_epoch = {}",
            group(e.compute_ns_per_sample_epoch)
        ));
        match &e.model {
            ModelConfig::Mlp {
                hidden,
                output,
                scaling,
            } => {
                w("model = mlp".into());
                let layers: Vec<String> = hidden.iter().map(|(n, a)| format!("{n}:{a}")).collect();
                w(format!("hidden = {}", layers.join(",")));
                w(format!("output = {}", output_name(*output)));
                w(format!("scaling = {scaling}"));
            }
            ModelConfig::LeNet {
                height,
                width,
                channels,
            } => {
                w("model = lenet".into());
                w(format!("lenet_input = {height}x{width}x{channels}"));
            }
        }
        w(format!("loss = {}", e.loss.name()));
        w(format!("learning_rate = {:?}", e.learning_rate));
        w(format!("batch_size = {}", e.batch_size));
        w(format!("max_epochs = {}", e.max_epochs));
        w(format!("loss_goal = {:?}", e.loss_goal));
        w(String::new());

        w("[data-center]".into());
        w(format!(
            "evaluation_samples = {}",
            self.center.evaluation_samples
        ));

        for n in &self.nodes {
            w(String::new());
            w(format!("[node {}]", n.id));
            w(format!("role = {}", n.role.as_str()));
            if let Some(v) = n.cache_capacity {
                w(format!("cache_capacity = {v}"));
            }
            if let Some(v) = n.sufficiency_threshold {
                w(format!("sufficiency_threshold = {v}"));
            }
            if let Some(v) = &n.neighbors {
                w(format!("neighbors = {}", join(v)));
            }
            if let Some(v) = n.target {
                w(format!("target = {v}"));
            }
            if let Some(v) = n.samples_to_send {
                w(format!("samples_to_send = {v}"));
            }
        }
        for l in &self.links {
            w(String::new());
            w("[link]".into());
            w(format!("a = {}", l.a));
            w(format!("b = {}", l.b));
            w(format!("rate_bps = {}", group(l.rate_bps)));
            w(format!("delay_ns = {}", group(l.delay_ns)));
            w(format!("queue_capacity = {}", l.queue_capacity));
        }
        out
    }
}

fn join(ids: &[u32]) -> String {
    ids.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

/// `1000000` -> `1_000_000`.
fn group(v: u64) -> String {
    let digits = v.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push('_');
        }
        out.push(c);
    }
    out
}

fn output_name(o: OutputKind) -> &'static str {
    match o {
        OutputKind::Linear => "linear",
        OutputKind::Logistic => "logistic",
        OutputKind::Softmax => "softmax",
    }
}

#[derive(Debug)]
enum SectionKind {
    Simulation,
    Dataset,
    Terminal,
    Edge,
    Center,
    Node(u32),
    Link,
}

struct Section {
    kind: SectionKind,
    line: usize,
    entries: Vec<(String, String, usize)>,
}

/// Field path -> line, for attaching lines to semantic errors.
type Lines = HashMap<String, usize>;

/// Parses and validates scenario text, reporting every error found.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigErrors> {
    let mut errs = Vec::new();
    let sections = split_sections(text, &mut errs);
    let mut lines = Lines::new();
    let mut cfg = ScenarioConfig {
        seed: 0,
        stop_at_ns: 5_000_000_000,
        dataset: DatasetConfig::default(),
        terminal: TerminalDefaults::default(),
        edge: EdgeDefaults::default(),
        center: CenterConfig {
            evaluation_samples: 0,
        },
        nodes: Vec::new(),
        links: Vec::new(),
    };
    let mut nodes: BTreeMap<u32, (NodeConfig, usize)> = BTreeMap::new();
    let mut seen_singletons: HashMap<&'static str, usize> = HashMap::new();

    for sec in sections {
        let name: &'static str = match sec.kind {
            SectionKind::Simulation => "simulation",
            SectionKind::Dataset => "dataset",
            SectionKind::Terminal => "terminal",
            SectionKind::Edge => "edge",
            SectionKind::Center => "data-center",
            SectionKind::Node(_) => "node",
            SectionKind::Link => "link",
        };
        if !matches!(sec.kind, SectionKind::Node(_) | SectionKind::Link) {
            if let Some(first) = seen_singletons.insert(name, sec.line) {
                errs.push(ConfigError {
                    line: Some(sec.line),
                    field: name.into(),
                    message: format!("section repeated (first at line {first})"),
                });
                continue;
            }
        }
        let mut p = FieldParser {
            prefix: match sec.kind {
                SectionKind::Node(id) => format!("node {id}"),
                SectionKind::Link => format!("link {}", cfg.links.len()),
                _ => name.to_string(),
            },
            errs: &mut errs,
            lines: &mut lines,
        };
        p.lines.insert(p.prefix.clone(), sec.line);
        match sec.kind {
            SectionKind::Simulation => {
                for (k, v, line) in &sec.entries {
                    match k.as_str() {
                        "seed" => p.int(k, v, *line, &mut cfg.seed),
                        "stop_at_ns" => p.int(k, v, *line, &mut cfg.stop_at_ns),
                        _ => p.unknown(k, *line),
                    }
                }
            }
            SectionKind::Dataset => {
                let d = &mut cfg.dataset;
                let mut kind = None;
                let mut path = None;
                for (k, v, line) in &sec.entries {
                    match k.as_str() {
                        "kind" => match v.as_str() {
                            "two-gaussians" | "xor" | "file" => {
                                p.lines.insert(format!("{}.kind", p.prefix), *line);
                                kind = Some((v.clone(), *line))
                            }
                            _ => p.bad(k, *line, "expected two-gaussians, xor or file"),
                        },
                        "path" => path = Some((PathBuf::from(v), *line)),
                        "features" => p.int(k, v, *line, &mut d.features),
                        "classes" => p.int(k, v, *line, &mut d.classes),
                        "spread" => p.float(k, v, *line, &mut d.spread),
                        _ => p.unknown(k, *line),
                    }
                }
                match (kind.as_ref().map(|(k, _)| k.as_str()), path) {
                    (Some("file"), Some((path, _))) => d.kind = DatasetKind::File(path),
                    (Some("file"), None) => {
                        p.bad("kind", kind.unwrap().1, "file datasets need a path")
                    }
                    (Some(_), Some((_, line))) => {
                        p.bad("path", line, "path only applies to kind = file")
                    }
                    (None, Some((_, line))) => {
                        p.bad("path", line, "path only applies to kind = file")
                    }
                    (Some("xor"), None) => d.kind = DatasetKind::Xor,
                    _ => d.kind = DatasetKind::TwoGaussians,
                }
            }
            SectionKind::Terminal => {
                let t = &mut cfg.terminal;
                for (k, v, line) in &sec.entries {
                    match k.as_str() {
                        "samples_to_send" => p.int(k, v, *line, &mut t.samples_to_send),
                        "inter_send_gap_ns" => p.int(k, v, *line, &mut t.inter_send_gap_ns),
                        "start_ns" => p.int(k, v, *line, &mut t.start_ns),
                        _ => p.unknown(k, *line),
                    }
                }
            }
            SectionKind::Edge => parse_edge(&sec, &mut p, &mut cfg.edge),
            SectionKind::Center => {
                for (k, v, line) in &sec.entries {
                    match k.as_str() {
                        "evaluation_samples" => {
                            p.int(k, v, *line, &mut cfg.center.evaluation_samples)
                        }
                        _ => p.unknown(k, *line),
                    }
                }
            }
            SectionKind::Node(id) => {
                let mut node = NodeConfig::new(id, Role::Gateway);
                let mut role = None;
                for (k, v, line) in &sec.entries {
                    match k.as_str() {
                        "role" => match Role::parse(v) {
                            Some(r) => {
                                role = Some(r);
                                p.lines.insert(format!("{}.role", p.prefix), *line);
                            }
                            None => {
                                p.bad(k, *line, "expected terminal, edge, gateway or data-center")
                            }
                        },
                        "cache_capacity" => p.opt_int(k, v, *line, &mut node.cache_capacity),
                        "sufficiency_threshold" => {
                            p.opt_int(k, v, *line, &mut node.sufficiency_threshold)
                        }
                        "target" => p.opt_int(k, v, *line, &mut node.target),
                        "samples_to_send" => p.opt_int(k, v, *line, &mut node.samples_to_send),
                        "neighbors" => {
                            p.lines.insert(format!("{}.neighbors", p.prefix), *line);
                            let list = v
                                .split(',')
                                .map(str::trim)
                                .filter(|s| !s.is_empty())
                                .map(parse_int::<u32>)
                                .collect::<Option<Vec<_>>>();
                            match list {
                                Some(l) => node.neighbors = Some(l),
                                None => p.bad(k, *line, "expected comma-separated node ids"),
                            }
                        }
                        _ => p.unknown(k, *line),
                    }
                }
                match role {
                    Some(r) => node.role = r,
                    None => p.bad("role", sec.line, "missing role"),
                }
                if let Some((_, first)) = nodes.get(&id) {
                    p.bad(
                        "",
                        sec.line,
                        &format!("node {id} declared twice (first at line {first})"),
                    );
                } else {
                    nodes.insert(id, (node, sec.line));
                }
            }
            SectionKind::Link => {
                let mut link = LinkSpec {
                    a: u32::MAX,
                    b: u32::MAX,
                    rate_bps: 1_000_000_000,
                    delay_ns: 2_000_000,
                    queue_capacity: 100,
                };
                let (mut has_a, mut has_b) = (false, false);
                for (k, v, line) in &sec.entries {
                    match k.as_str() {
                        "a" => {
                            has_a = true;
                            p.int(k, v, *line, &mut link.a)
                        }
                        "b" => {
                            has_b = true;
                            p.int(k, v, *line, &mut link.b)
                        }
                        "rate_bps" => p.int(k, v, *line, &mut link.rate_bps),
                        "delay_ns" => p.int(k, v, *line, &mut link.delay_ns),
                        "queue_capacity" => p.int(k, v, *line, &mut link.queue_capacity),
                        _ => p.unknown(k, *line),
                    }
                }
                if !has_a || !has_b {
                    p.bad("", sec.line, "a link needs both endpoints a and b");
                }
                cfg.links.push(link);
            }
        }
    }
    cfg.nodes = nodes.into_values().map(|(n, _)| n).collect();

    for mut e in cfg.validate() {
        e.line = lookup_line(&lines, &e.field);
        errs.push(e);
    }
    if errs.is_empty() {
        Ok(cfg)
    } else {
        errs.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
        Err(ConfigErrors(errs))
    }
}

fn lookup_line(lines: &Lines, field: &str) -> Option<usize> {
    let mut key = field;
    loop {
        if let Some(l) = lines.get(key) {
            return Some(*l);
        }
        key = &key[..key.rfind('.')?];
    }
}

fn parse_edge(sec: &Section, p: &mut FieldParser<'_>, e: &mut EdgeDefaults) {
    let mut model = None;
    let (mut hidden, mut output, mut scaling, mut lenet) = (None, None, None, None);
    for (k, v, line) in &sec.entries {
        let line = *line;
        match k.as_str() {
            "cache_capacity" => p.int(k, v, line, &mut e.cache_capacity),
            "sufficiency_threshold" => p.int(k, v, line, &mut e.sufficiency_threshold),
            "collect_window_ns" => p.int(k, v, line, &mut e.collect_window_ns),
            "reply_timeout_ns" => p.int(k, v, line, &mut e.reply_timeout_ns),
            "compute_ns_per_sample_epoch" => p.int(k, v, line, &mut e.compute_ns_per_sample_epoch),
            "learning_rate" => p.float(k, v, line, &mut e.learning_rate),
            "batch_size" => p.int(k, v, line, &mut e.batch_size),
            "max_epochs" => p.int(k, v, line, &mut e.max_epochs),
            "loss_goal" => p.float(k, v, line, &mut e.loss_goal),
            "loss" => match LossIndex::from_name(v) {
                Some(l) => {
                    p.lines.insert(format!("{}.loss", p.prefix), line);
                    e.loss = l
                }
                None => p.bad(k, line, "expected mse or cross_entropy"),
            },
            "model" => match v.as_str() {
                "mlp" | "lenet" => {
                    p.lines.insert(format!("{}.model", p.prefix), line);
                    model = Some((v.clone(), line))
                }
                _ => p.bad(k, line, "expected mlp or lenet"),
            },
            "hidden" => match parse_hidden(v) {
                Some(h) => hidden = Some((h, line)),
                None => p.bad(k, line, "expected comma-separated WIDTH:ACTIVATION entries"),
            },
            "output" => match v.as_str() {
                "linear" => output = Some((OutputKind::Linear, line)),
                "logistic" => output = Some((OutputKind::Logistic, line)),
                "softmax" => output = Some((OutputKind::Softmax, line)),
                _ => p.bad(k, line, "expected linear, logistic or softmax"),
            },
            "scaling" => match v.as_str() {
                "true" => scaling = Some((true, line)),
                "false" => scaling = Some((false, line)),
                _ => p.bad(k, line, "expected true or false"),
            },
            "lenet_input" => {
                let dims: Option<Vec<usize>> = v.split('x').map(parse_int).collect();
                match dims.as_deref() {
                    Some(&[h, w, c]) => lenet = Some(((h, w, c), line)),
                    _ => p.bad(k, line, "expected HEIGHTxWIDTHxCHANNELS"),
                }
            }
            _ => p.unknown(k, line),
        }
    }
    let is_lenet = model.as_ref().is_some_and(|(m, _)| m == "lenet");
    if is_lenet {
        for (name, line) in [
            ("hidden", hidden.as_ref().map(|h| h.1)),
            ("output", output.map(|o| o.1)),
            ("scaling", scaling.map(|s| s.1)),
        ] {
            if let Some(line) = line {
                p.bad(name, line, "only applies to model = mlp");
            }
        }
        match lenet {
            Some(((height, width, channels), line)) => {
                p.lines.insert(format!("{}.lenet_input", p.prefix), line);
                e.model = ModelConfig::LeNet {
                    height,
                    width,
                    channels,
                };
            }
            None => p.bad(
                "model",
                model.unwrap().1,
                "lenet needs lenet_input = HEIGHTxWIDTHxCHANNELS",
            ),
        }
    } else {
        if let Some((_, line)) = lenet {
            p.bad("lenet_input", line, "only applies to model = lenet");
        }
        let ModelConfig::Mlp {
            hidden: dh,
            output: dout,
            scaling: ds,
        } = EdgeDefaults::default().model
        else {
            unreachable!("default model is an mlp")
        };
        for (name, line) in [
            ("hidden", hidden.as_ref().map(|h| h.1)),
            ("output", output.map(|o| o.1)),
        ] {
            if let Some(line) = line {
                p.lines.insert(format!("{}.{name}", p.prefix), line);
            }
        }
        e.model = ModelConfig::Mlp {
            hidden: hidden.map_or(dh, |h| h.0),
            output: output.map_or(dout, |o| o.0),
            scaling: scaling.map_or(ds, |s| s.0),
        };
    }
}

fn parse_hidden(v: &str) -> Option<Vec<(usize, Activation)>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let (w, a) = entry.split_once(':')?;
            Some((parse_int(w.trim())?, Activation::from_name(a.trim())?))
        })
        .collect()
}

fn parse_int<T: std::str::FromStr>(v: &str) -> Option<T> {
    let digits: String = v.chars().filter(|c| *c != '_').collect();
    if digits.is_empty() || v.starts_with('_') || v.ends_with('_') {
        return None;
    }
    digits.parse().ok()
}

struct FieldParser<'a> {
    prefix: String,
    errs: &'a mut Vec<ConfigError>,
    lines: &'a mut Lines,
}

impl FieldParser<'_> {
    fn field(&self, key: &str) -> String {
        if key.is_empty() {
            self.prefix.clone()
        } else {
            format!("{}.{key}", self.prefix)
        }
    }

    fn bad(&mut self, key: &str, line: usize, message: &str) {
        self.errs.push(ConfigError {
            line: Some(line),
            field: self.field(key),
            message: message.to_owned(),
        });
    }

    fn unknown(&mut self, key: &str, line: usize) {
        self.bad(key, line, "unknown field");
    }

    fn int<T: std::str::FromStr>(&mut self, key: &str, v: &str, line: usize, slot: &mut T) {
        self.lines.insert(self.field(key), line);
        match parse_int(v) {
            Some(x) => *slot = x,
            None => self.bad(
                key,
                line,
                &format!("expected a non-negative integer, got {v:?}"),
            ),
        }
    }

    fn opt_int<T: std::str::FromStr>(
        &mut self,
        key: &str,
        v: &str,
        line: usize,
        slot: &mut Option<T>,
    ) {
        self.lines.insert(self.field(key), line);
        match parse_int(v) {
            Some(x) => *slot = Some(x),
            None => self.bad(
                key,
                line,
                &format!("expected a non-negative integer, got {v:?}"),
            ),
        }
    }

    fn float(&mut self, key: &str, v: &str, line: usize, slot: &mut f64) {
        self.lines.insert(self.field(key), line);
        let cleaned: String = v.chars().filter(|c| *c != '_').collect();
        match cleaned.parse::<f64>() {
            Ok(x) => *slot = x,
            Err(_) => self.bad(key, line, &format!("expected a number, got {v:?}")),
        }
    }
}

fn split_sections(text: &str, errs: &mut Vec<ConfigError>) -> Vec<Section> {
    let mut sections: Vec<Section> = Vec::new();
    let mut seen_header = false;
    let mut skipping = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut err = |field: &str, message: String| {
            errs.push(ConfigError {
                line: Some(line_no),
                field: field.into(),
                message,
            })
        };
        if !seen_header {
            seen_header = true;
            let normalized: String = line.split_whitespace().collect::<Vec<_>>().join(" ");
            if normalized != CONFIG_FORMAT_HEADER {
                err(
                    "format",
                    format!("expected {CONFIG_FORMAT_HEADER:?} as the first line"),
                );
            } else {
                continue;
            }
        }
        if let Some(inner) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let inner = inner.trim();
            let kind = match inner {
                "simulation" => Some(SectionKind::Simulation),
                "dataset" => Some(SectionKind::Dataset),
                "terminal" => Some(SectionKind::Terminal),
                "edge" => Some(SectionKind::Edge),
                "data-center" => Some(SectionKind::Center),
                "link" => Some(SectionKind::Link),
                _ => match inner
                    .strip_prefix("node")
                    .map(str::trim)
                    .and_then(parse_int::<u32>)
                {
                    Some(id) => Some(SectionKind::Node(id)),
                    None => {
                        err(inner, "unknown section".into());
                        None
                    }
                },
            };
            skipping = kind.is_none();
            if let Some(kind) = kind {
                sections.push(Section {
                    kind,
                    line: line_no,
                    entries: Vec::new(),
                });
            }
            continue;
        }
        if skipping {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            err("", format!("expected key = value, got {line:?}"));
            continue;
        };
        match sections.last_mut() {
            Some(sec) => sec
                .entries
                .push((k.trim().to_owned(), v.trim().to_owned(), line_no)),
            None => err(k.trim(), "field outside of any section".into()),
        }
    }
    if !seen_header {
        errs.push(ConfigError {
            line: None,
            field: "format".into(),
            message: format!("empty config; expected {CONFIG_FORMAT_HEADER:?}"),
        });
    }
    sections
}
