//! Run configuration: a TOML file plus command-line overrides, validated in
//! one pass so every problem is reported together.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hpyp_core::gp::Kernel;
use hpyp_core::lda::{LdaConfig, NodeParams};
use hpyp_core::pyp::{HyperPrior, NewTopicSlot};
use hpyp_core::tntm::{Ablation, TntmConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    HpypLda,
    HdpLda,
    Tntm,
}

impl ModelKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "hpyp-lda" => Some(ModelKind::HpypLda),
            "hdp-lda" => Some(ModelKind::HdpLda),
            "tntm" => Some(ModelKind::Tntm),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::HpypLda => "hpyp-lda",
            ModelKind::HdpLda => "hdp-lda",
            ModelKind::Tntm => "tntm",
        }
    }

    fn node_classes(self) -> &'static [&'static str] {
        match self {
            ModelKind::HpypLda | ModelKind::HdpLda => &["mu", "nu", "theta", "phi", "gamma"],
            ModelKind::Tntm => &[
                "mu0",
                "mu1",
                "nu",
                "eta",
                "theta_prime",
                "theta",
                "psi",
                "psi_prime",
                "gamma",
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Plain,
    Tweets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSettings {
    pub enabled: bool,
    pub kernel: Kernel,
    pub self_links: bool,
    pub lambda: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelKind,
    pub ablate: Vec<String>,
    pub seed: u64,
    pub iterations: usize,
    pub mh_start: usize,
    pub chains: usize,
    pub k_init: usize,
    pub max_topics: Option<usize>,
    pub sample_concentrations: bool,
    pub new_topic_slot: NewTopicSlot,
    pub hyperprior: HyperPrior,
    pub test_fraction: f64,
    pub replicates: usize,
    pub format: Format,
    pub corpus: PathBuf,
    pub edges: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Per node class `(discount, concentration)`, only those set explicitly.
    pub nodes: BTreeMap<String, NodeParams>,
    pub network: NetworkSettings,
}

/// Values given on the command line; each replaces the file's entry.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub model: Option<String>,
    pub ablate: Vec<String>,
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub mh_start: Option<usize>,
    pub chains: Option<usize>,
    pub corpus: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// `dotted.key=value` assignments, value parsed as TOML where possible.
    pub set: Vec<String>,
}

fn insert_path(table: &mut Table, key: &str, value: Value) -> Result<(), String> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or(format!("empty key in override {key:?}"))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or(format!("override {key:?}: {p} is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_scalar(text: &str) -> Value {
    let wrapped = format!("v = {text}");
    match wrapped.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or(Value::String(text.into())),
        Err(_) => Value::String(text.into()),
    }
}

/// Reads keys out of a table, recording problems instead of stopping.
struct Reader {
    errors: Vec<String>,
    /// Prepended to key names in messages.
    prefix: String,
}

impl Reader {
    fn take(&mut self, table: &mut Table, key: &str) -> Option<Value> {
        table.remove(key)
    }

    fn uint(&mut self, table: &mut Table, key: &str) -> Option<u64> {
        match self.take(table, key)? {
            Value::Integer(i) if i >= 0 => Some(i as u64),
            other => {
                self.errors.push(format!("{}{key}: expected a non-negative integer, found {other}", self.prefix));
                None
            }
        }
    }

    fn float(&mut self, table: &mut Table, key: &str) -> Option<f64> {
        match self.take(table, key)? {
            Value::Float(f) => Some(f),
            Value::Integer(i) => Some(i as f64),
            other => {
                self.errors.push(format!("{}{key}: expected a number, found {other}", self.prefix));
                None
            }
        }
    }

    fn boolean(&mut self, table: &mut Table, key: &str) -> Option<bool> {
        match self.take(table, key)? {
            Value::Boolean(b) => Some(b),
            other => {
                self.errors.push(format!("{}{key}: expected true or false, found {other}", self.prefix));
                None
            }
        }
    }

    fn string(&mut self, table: &mut Table, key: &str) -> Option<String> {
        match self.take(table, key)? {
            Value::String(s) => Some(s),
            other => {
                self.errors.push(format!("{}{key}: expected a string, found {other}", self.prefix));
                None
            }
        }
    }

    fn table(&mut self, table: &mut Table, key: &str) -> Table {
        match self.take(table, key) {
            None => Table::new(),
            Some(Value::Table(t)) => t,
            Some(other) => {
                self.errors.push(format!("{}{key}: expected a table, found {other}", self.prefix));
                Table::new()
            }
        }
    }

    fn leftovers(&mut self, table: &Table, prefix: &str) {
        for key in table.keys() {
            self.errors.push(format!("unknown key {prefix}{key}"));
        }
    }
}

impl RunConfig {
    /// Builds a validated configuration from file text (possibly empty) and
    /// overrides. On failure returns every problem found.
    pub fn load(text: &str, overrides: &Overrides) -> Result<RunConfig, Vec<String>> {
        let mut table: Table = match text.parse() {
            Ok(t) => t,
            Err(e) => return Err(vec![format!("config is not valid TOML: {e}")]),
        };
        let mut errors = Vec::new();
        let mut set = |key: &str, value: Value, errors: &mut Vec<String>| {
            if let Err(e) = insert_path(&mut table, key, value) {
                errors.push(e);
            }
        };
        if let Some(m) = &overrides.model {
            set("model", Value::String(m.clone()), &mut errors);
        }
        if !overrides.ablate.is_empty() {
            set(
                "ablate",
                Value::Array(overrides.ablate.iter().cloned().map(Value::String).collect()),
                &mut errors,
            );
        }
        if let Some(s) = overrides.seed {
            set("seed", Value::Integer(s as i64), &mut errors);
        }
        if let Some(i) = overrides.iterations {
            set("iterations", Value::Integer(i as i64), &mut errors);
        }
        if let Some(i) = overrides.mh_start {
            set("mh_start", Value::Integer(i as i64), &mut errors);
        }
        if let Some(c) = overrides.chains {
            set("chains", Value::Integer(c as i64), &mut errors);
        }
        for (key, path) in [("corpus", &overrides.corpus), ("edges", &overrides.edges), ("labels", &overrides.labels)] {
            if let Some(p) = path {
                set(key, Value::String(p.display().to_string()), &mut errors);
            }
        }
        for assignment in &overrides.set {
            match assignment.split_once('=') {
                Some((k, v)) => set(k.trim(), parse_scalar(v.trim()), &mut errors),
                None => errors.push(format!("override {assignment:?} is not of the form key=value")),
            }
        }
        let mut r = Reader {
            errors,
            prefix: String::new(),
        };
        let t = &mut table;

        let model = match r.string(t, "model") {
            None => ModelKind::HpypLda,
            Some(s) => ModelKind::parse(&s).unwrap_or_else(|| {
                r.errors.push(format!("model: unknown model {s:?} (expected hpyp-lda, hdp-lda or tntm)"));
                ModelKind::HpypLda
            }),
        };
        let mut ablate = Vec::new();
        match r.take(t, "ablate") {
            None => {}
            Some(Value::Array(items)) => {
                for item in items {
                    match item.as_str().and_then(Ablation::parse) {
                        Some(a) => ablate.push(a.name().to_string()),
                        None => r.errors.push(format!(
                            "ablate: unknown ablation {item} (expected one of {})",
                            Ablation::ALL.map(Ablation::name).join(", ")
                        )),
                    }
                }
            }
            Some(other) => r.errors.push(format!("ablate: expected a list of names, found {other}")),
        }
        if !ablate.is_empty() && model != ModelKind::Tntm {
            r.errors.push("ablate: ablations apply only to the tntm model".into());
        }
        let seed = r.uint(t, "seed");
        if seed.is_none() && !r.errors.iter().any(|e| e.starts_with("seed")) {
            r.errors.push("seed: a seed is required".into());
        }
        let iterations = r.uint(t, "iterations").unwrap_or(1000) as usize;
        let mh_start = r.uint(t, "mh_start").map(|v| v as usize).unwrap_or(iterations / 2);
        if mh_start > iterations {
            r.errors.push(format!("mh_start: {mh_start} exceeds iterations {iterations}"));
        }
        let chains = r.uint(t, "chains").unwrap_or(1) as usize;
        if chains == 0 {
            r.errors.push("chains: at least one chain is required".into());
        }
        let k_init = r.uint(t, "k_init").unwrap_or(1) as usize;
        if k_init == 0 {
            r.errors.push("k_init: at least one initial topic is required".into());
        }
        let max_topics = r.uint(t, "max_topics").map(|v| v as usize);
        if let Some(m) = max_topics {
            if m < k_init {
                r.errors.push(format!("max_topics: {m} is below k_init {k_init}"));
            }
        }
        let sample_concentrations = r.boolean(t, "sample_concentrations").unwrap_or(true);
        let new_topic_slot = match r.string(t, "new_topic_slot").as_deref() {
            None | Some("renormalise") => NewTopicSlot::RenormalizeRoot,
            Some("discard") => NewTopicSlot::Discard,
            Some("keep") => NewTopicSlot::Keep,
            Some(other) => {
                r.errors.push(format!(
                    "new_topic_slot: unknown policy {other:?} (expected renormalise, discard or keep)"
                ));
                NewTopicSlot::RenormalizeRoot
            }
        };
        let test_fraction = r.float(t, "test_fraction").unwrap_or(0.1);
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            r.errors.push(format!("test_fraction: {test_fraction} is outside (0, 1)"));
        }
        let replicates = r.uint(t, "replicates").unwrap_or(20) as usize;
        if replicates == 0 {
            r.errors.push("replicates: at least one replicate is required".into());
        }
        let format = match r.string(t, "format").as_deref() {
            None if model == ModelKind::Tntm => Format::Tweets,
            None | Some("plain") => Format::Plain,
            Some("tweets") => Format::Tweets,
            Some(other) => {
                r.errors.push(format!("format: unknown corpus format {other:?} (expected plain or tweets)"));
                Format::Plain
            }
        };
        if model == ModelKind::Tntm && format != Format::Tweets {
            r.errors.push("format: the tntm model needs a tweet corpus".into());
        }
        let corpus = r.string(t, "corpus").map(PathBuf::from);
        if corpus.is_none() {
            r.errors.push("corpus: a corpus path is required".into());
        }
        let edges = r.string(t, "edges").map(PathBuf::from);
        if edges.is_some() && format != Format::Tweets {
            r.errors.push("edges: a follower network needs a tweet corpus".into());
        }
        let labels = r.string(t, "labels").map(PathBuf::from);

        let mut hp = r.table(t, "hyperprior");
        r.prefix = "hyperprior.".into();
        let shape = r.float(&mut hp, "shape").unwrap_or(0.1);
        let rate = r.float(&mut hp, "rate").unwrap_or(0.1);
        r.prefix.clear();
        r.leftovers(&hp, "hyperprior.");
        let hyperprior = HyperPrior::new(shape, rate).unwrap_or_else(|e| {
            r.errors.push(format!("hyperprior: {e}"));
            HyperPrior::default()
        });

        let mut nodes = BTreeMap::new();
        let mut node_table = r.table(t, "nodes");
        let defaults = default_params(model);
        for &class in model.node_classes() {
            let Some(v) = node_table.remove(class) else { continue };
            let Value::Table(mut entry) = v else {
                r.errors.push(format!("nodes.{class}: expected a table"));
                continue;
            };
            let base = defaults[class];
            r.prefix = format!("nodes.{class}.");
            let discount = r.float(&mut entry, "discount").unwrap_or(base.discount);
            let concentration = r.float(&mut entry, "concentration").unwrap_or(base.concentration);
            r.prefix.clear();
            r.leftovers(&entry, &format!("nodes.{class}."));
            if !(0.0..1.0).contains(&discount) {
                r.errors.push(format!("nodes.{class}.discount: {discount} is outside [0, 1)"));
            } else if !(concentration > -discount && concentration.is_finite()) {
                r.errors.push(format!(
                    "nodes.{class}.concentration: {concentration} must exceed minus the discount"
                ));
            }
            if model == ModelKind::HdpLda && discount != 0.0 {
                r.errors.push(format!("nodes.{class}.discount: hdp-lda fixes every discount at 0"));
            }
            nodes.insert(class.to_string(), NodeParams::new(discount, concentration));
        }
        r.leftovers(&node_table, "nodes.");

        let mut net = r.table(t, "network");
        let defaults = TntmConfig::default();
        r.prefix = "network.".into();
        let enabled = r.boolean(&mut net, "enabled").unwrap_or(true);
        let kernel = Kernel {
            scale: r.float(&mut net, "scale").unwrap_or(defaults.kernel.scale),
            length: r.float(&mut net, "length").unwrap_or(defaults.kernel.length),
            noise: r.float(&mut net, "noise").unwrap_or(defaults.kernel.noise),
        };
        if let Err(e) = kernel.validate() {
            r.errors.push(format!("network: {e}"));
        }
        let self_links = r.boolean(&mut net, "self_links").unwrap_or(defaults.self_links);
        r.prefix.clear();
        let mut lambda = defaults.lambda;
        match r.take(&mut net, "lambda") {
            None => {}
            Some(Value::Array(items)) if items.len() == 2 => {
                for (slot, item) in lambda.iter_mut().zip(&items) {
                    match item.as_float().or(item.as_integer().map(|i| i as f64)) {
                        Some(v) if v > 0.0 && v.is_finite() => *slot = v,
                        _ => r.errors.push(format!("network.lambda: {item} is not a positive number")),
                    }
                }
            }
            Some(other) => r.errors.push(format!("network.lambda: expected two numbers, found {other}")),
        }
        r.leftovers(&net, "network.");
        r.leftovers(t, "");

        if !r.errors.is_empty() {
            return Err(r.errors);
        }
        Ok(RunConfig {
            model,
            ablate,
            seed: seed.unwrap_or_default(),
            iterations,
            mh_start,
            chains,
            k_init,
            max_topics,
            sample_concentrations,
            new_topic_slot,
            hyperprior,
            test_fraction,
            replicates,
            format,
            corpus: corpus.unwrap_or_default(),
            edges,
            labels,
            nodes,
            network: NetworkSettings {
                enabled,
                kernel,
                self_links,
                lambda,
            },
        })
    }

    /// Hex SHA-256 of the configuration, ignoring the chain count.
    pub fn digest(&self) -> String {
        let mut copy = self.clone();
        copy.chains = 1;
        let text = serde_json::to_string(&copy).expect("configuration serialises");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn lda_config(&self) -> LdaConfig {
        let mut c = match self.model {
            ModelKind::HdpLda => LdaConfig::hdp(),
            _ => LdaConfig::default(),
        };
        for (class, slot) in [
            ("mu", &mut c.mu),
            ("nu", &mut c.nu),
            ("theta", &mut c.theta),
            ("phi", &mut c.phi),
            ("gamma", &mut c.gamma),
        ] {
            if let Some(p) = self.nodes.get(class) {
                *slot = *p;
            }
        }
        c.k_init = self.k_init;
        c.max_topics = self.max_topics;
        c.hyper = self.hyperprior;
        c.sample_concentrations = self.sample_concentrations;
        c.new_topic_slot = self.new_topic_slot;
        c
    }

    pub fn tntm_config(&self) -> TntmConfig {
        let mut c = TntmConfig::default();
        let classes = ModelKind::Tntm.node_classes();
        for (class, slot) in classes.iter().zip(c.params_mut()) {
            if let Some(p) = self.nodes.get(*class) {
                *slot = *p;
            }
        }
        c.lambda = self.network.lambda;
        c.kernel = self.network.kernel;
        c.self_links = self.network.self_links;
        c.network = self.network.enabled;
        c.ablations = self.ablate.iter().filter_map(|a| Ablation::parse(a)).collect();
        c.k_init = self.k_init;
        c.max_topics = self.max_topics;
        c.hyper = self.hyperprior;
        c.sample_concentrations = self.sample_concentrations;
        c.new_topic_slot = self.new_topic_slot;
        c.mh_start = self.mh_start;
        c
    }
}

fn default_params(model: ModelKind) -> BTreeMap<&'static str, NodeParams> {
    match model {
        ModelKind::Tntm => {
            let mut c = TntmConfig::default();
            ModelKind::Tntm.node_classes().iter().copied().zip(c.params_mut().map(|p| *p)).collect()
        }
        _ => {
            let c = if model == ModelKind::HdpLda {
                LdaConfig::hdp()
            } else {
                LdaConfig::default()
            };
            [("mu", c.mu), ("nu", c.nu), ("theta", c.theta), ("phi", c.phi), ("gamma", c.gamma)]
                .into_iter()
                .collect()
        }
    }
}
