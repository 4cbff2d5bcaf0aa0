//! A deterministic rule-based model that answers every pipeline prompt, plus
//! helpers shared by the CLI integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock};

use clap::Parser;
use regex::Regex;
use repro_cli::{execute, Backends, Cli, CliError, Outcome};
use repro_core::gateway::scripted::FnBackend;
use repro_core::gateway::structured::parse_code_files;
use repro_core::gateway::{BackendError, ChatBackend, ChatRequest};
use repro_core::Purpose;
use serde_json::json;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn run_fixture(rel: &str) -> PathBuf {
    fixtures().join("run").join(rel)
}

/// Parse `args` as a command line and execute it.
pub fn exec(args: &[&str], backends: &Backends) -> Result<Outcome, CliError> {
    let mut argv = vec!["repro"];
    argv.extend_from_slice(args);
    let cli = Cli::try_parse_from(argv).expect("valid command line");
    execute(&cli, backends)
}

pub fn exec_in(
    config: &Path,
    run_dir: &Path,
    args: &[&str],
    backends: &Backends,
) -> Result<Outcome, CliError> {
    let config = config.to_str().unwrap();
    let run_dir = run_dir.to_str().unwrap();
    let mut all = vec!["--config", config, "--run-dir", run_dir];
    all.extend_from_slice(args);
    exec(&all, backends)
}

pub fn fixture_backends() -> Backends {
    Backends {
        chat: Some(fixture_model()),
        embedder: None,
    }
}

pub fn fixture_model() -> Arc<dyn ChatBackend> {
    Arc::new(FnBackend(|req: &ChatRequest| reply(req)))
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:\.\d+)?(?:e-?\d+)?").unwrap());
static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[a-z]{5,}").unwrap());
static LISTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\[(\d+)\]: ?(.*)$").unwrap());
static BRACKETED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\[(\d+)\] (.*)$").unwrap());
static PLANNED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\d+\. Add (.*)$").unwrap());

fn numbers(text: &str) -> BTreeSet<String> {
    NUMBER
        .find_iter(text)
        .map(|m| m.as_str().to_string())
        .collect()
}

fn words(text: &str) -> BTreeSet<String> {
    WORD.find_iter(&text.to_lowercase())
        .map(|m| m.as_str().to_string())
        .collect()
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let len = text[from..].find(end)?;
    Some(&text[from..from + len])
}

fn fact_of(rendered: &str) -> &str {
    between(rendered, "<fact>", "</fact>")
        .unwrap_or(rendered)
        .trim()
}

/// The fact counts as implemented when all of its numbers and most of its
/// long words occur in the submission.
fn implemented(fact: &str, submission: &str) -> bool {
    let have_numbers = numbers(submission);
    if !numbers(fact).is_subset(&have_numbers) {
        return false;
    }
    let want = words(fact);
    let have = words(submission);
    let hit = want.intersection(&have).count();
    want.is_empty() || hit * 3 >= want.len() * 2
}

fn framework_guides(aspect: &str) -> serde_json::Value {
    match aspect {
        "data" => json!([
            "Load the Cora, Citeseer and Pubmed citation graphs with the standard public split",
            {"name": "Preprocessing", "text": "Row-normalize node features before training"}
        ]),
        "model" => json!([
            {"name": "Projection", "text": "Project input features with a linear layer followed by ReLU"},
            {"name": "Gated propagation", "text": "Mix smoothed features with the projected input through a sigmoid gate per propagation step"}
        ]),
        "training" => json!([
            "Minimize cross-entropy on labelled nodes with early stopping on validation loss"
        ]),
        _ => json!(["Report mean test accuracy and its standard deviation over random seeds"]),
    }
}

fn configuration_guides() -> serde_json::Value {
    json!([
        "The hidden layer has 64 units",
        "Propagation runs for K = 10 steps",
        "Dropout probability is 0.5 on both linear layers",
        "Adam optimizer with learning rate 0.01",
        "L2 penalty 5e-4 on the first linear layer",
        "Train for at most 200 epochs with early stopping patience 20",
        "Training stops after 20 epochs without improvement; the weights with the lowest validation loss are kept",
        "Every configuration is run with 10 random seeds"
    ])
}

fn scan(user: &str) -> String {
    let listing = user.split("Paragraph:\n").nth(1).unwrap_or("");
    let picked: Vec<usize> = LISTED
        .captures_iter(listing)
        .filter(|c| c[2].chars().any(|ch| ch.is_ascii_digit()))
        .map(|c| c[1].parse().unwrap())
        .collect();
    json!(picked).to_string()
}

fn ground(user: &str) -> String {
    let detail = between(user, "Detail:\n", "\n\nCandidate sentences:").unwrap_or("");
    let want = words(detail);
    let listing = user.split("Candidate sentences:\n").nth(1).unwrap_or("");
    let best = LISTED
        .captures_iter(listing)
        .map(|c| {
            (
                words(&c[2]).intersection(&want).count(),
                c[1].parse::<usize>().unwrap(),
            )
        })
        .fold(None, |best: Option<(usize, usize)>, cur| match best {
            Some(b) if b.0 >= cur.0 => Some(b),
            _ => Some(cur),
        });
    match best {
        Some((hits, n)) if hits >= 2 => format!("[{n}]"),
        _ => "[]".into(),
    }
}

fn standardize(user: &str) -> String {
    let fact = between(user, "Summary Fact: \"", "\"\nReference Sentence:").unwrap_or("");
    let fact = fact.trim().trim_end_matches('.');
    let criteria: Vec<serde_json::Value> = fact
        .split("; ")
        .filter(|f| !f.is_empty())
        .map(|f| json!({"criterion": format!("The <fact>{f}</fact> <scope>in the reported experiments</scope>.")}))
        .collect();
    serde_json::Value::Array(criteria).to_string()
}

const SKELETON: &str = "import torch


class Data:
    \"\"\"Citation graph with features, labels and the public split.\"\"\"
    pass


class Model:
    \"\"\"Projection, gated propagation and classifier.\"\"\"
    pass


class Trainer:
    \"\"\"Optimisation loop with early stopping.\"\"\"
    pass


class Evaluator:
    \"\"\"Accuracy over seeds.\"\"\"
    pass


def main():
    \"\"\"Run every dataset and report.\"\"\"
    pass


if __name__ == \"__main__\":
    main()
";

fn fill(symbol: &str) -> &'static str {
    match symbol {
        "Data" => {
            "class Data:
    def __init__(self, name, root=\"data\"):
        from torch_geometric.datasets import Planetoid

        dataset = Planetoid(root, name, split=\"public\")
        graph = dataset[0]
        x = graph.x
        graph.x = x / x.sum(1, keepdim=True).clamp(min=1)
        self.graph = graph
        self.num_classes = dataset.num_classes
        n = graph.num_nodes
        a = torch.zeros(n, n)
        a[graph.edge_index[0], graph.edge_index[1]] = 1.0
        a = a + torch.eye(n)
        d = a.sum(1).pow(-0.5)
        self.s = d[:, None] * a * d[None, :]
"
        }
        "Model" => {
            "class Model(torch.nn.Module):
    def __init__(self, in_dim, num_classes, hidden=64, steps=10, dropout=0.5):
        super().__init__()
        self.lin1 = torch.nn.Linear(in_dim, hidden)
        self.lin2 = torch.nn.Linear(hidden, num_classes)
        self.gates = torch.nn.Parameter(torch.zeros(steps))
        self.dropout = dropout

    def forward(self, x, s):
        x = torch.nn.functional.dropout(x, self.dropout, self.training)
        h0 = torch.relu(self.lin1(x))
        h = h0
        for g in self.gates:
            w = torch.sigmoid(g)
            h = w * (s @ h) + (1 - w) * h0
        h = torch.nn.functional.dropout(h, self.dropout, self.training)
        return self.lin2(h)
"
        }
        "Trainer" => {
            "class Trainer:
    def __init__(self, model, data, lr=0.01, epochs=200, patience=20):
        self.model = model
        self.data = data
        self.epochs = epochs
        self.patience = patience
        self.opt = torch.optim.Adam(model.parameters(), lr=lr)

    def loss(self, mask):
        g = self.data.graph
        out = self.model(g.x, self.data.s)
        return torch.nn.functional.cross_entropy(out[mask], g.y[mask])

    def train(self):
        g = self.data.graph
        best, best_state, waited = float(\"inf\"), None, 0
        for _ in range(self.epochs):
            self.model.train()
            self.opt.zero_grad()
            self.loss(g.train_mask).backward()
            self.opt.step()
            self.model.eval()
            with torch.no_grad():
                val = self.loss(g.val_mask).item()
            if val < best:
                best, waited = val, 0
                best_state = {k: v.clone() for k, v in self.model.state_dict().items()}
            else:
                waited += 1
                if waited >= self.patience:
                    break
        self.model.load_state_dict(best_state)
        return self.model
"
        }
        "Evaluator" => {
            "class Evaluator:
    def accuracy(self, model, data):
        g = data.graph
        model.eval()
        with torch.no_grad():
            pred = model(g.x, data.s).argmax(1)
        return (pred[g.test_mask] == g.y[g.test_mask]).float().mean().item()

    def summarize(self, scores):
        t = torch.tensor(scores)
        return t.mean().item(), t.std().item()
"
        }
        _ => {
            "def main():
    for name in [\"Cora\", \"Citeseer\", \"Pubmed\"]:
        scores = []
        for seed in range(10):
            torch.manual_seed(seed)
            data = Data(name)
            model = Model(data.graph.num_features, data.num_classes)
            Trainer(model, data).train()
            scores.append(Evaluator().accuracy(model, data))
        mean, std = Evaluator().summarize(scores)
        print(f\"{name}: {mean:.4f} +- {std:.4f}\")
"
        }
    }
}

fn verification(user: &str) -> String {
    let submission = between(user, "# Submission", "# Criterion").unwrap_or("");
    let rendered = user.split("# Criterion").nth(1).unwrap_or("").trim();
    let fact = fact_of(rendered);
    let ok = implemented(fact, submission);
    format!(
        "**Expected Implementation**\nThe code implements: {fact}\n\n**Actual Findings**\n{}\n\n\
         **Verification Result**\nscore: {}\n{}",
        if ok {
            "The relevant values appear in the code."
        } else {
            "Some required values are absent."
        },
        ok as u8,
        if ok {
            "Implemented as described."
        } else {
            "Not implemented."
        }
    )
}

fn plan(user: &str) -> String {
    let steps: Vec<String> = user
        .lines()
        .filter_map(|l| l.strip_prefix("#### Criterion "))
        .map(fact_of)
        .enumerate()
        .map(|(i, f)| format!("{}. Add {f}", i + 1))
        .collect();
    format!(
        "### CONFIG_PLAN\nNo changes needed for config.yaml\n\n### CODE_PLAN\n\n## Code: main.py\n{}\n",
        steps.join("\n")
    )
}

fn refine(user: &str) -> Result<String, BackendError> {
    let plan = between(user, "# Revision plan", "# Current project").unwrap_or("");
    let project = user.split("# Current project").nth(1).unwrap_or("");
    let files = parse_code_files(project).map_err(|e| BackendError::Fatal(e.reason))?;
    let notes: String = PLANNED
        .captures_iter(plan)
        .map(|c| format!("# {}\n", &c[1]))
        .collect();
    Ok(files
        .iter()
        .map(|f| {
            let mut content = f.content.clone();
            if f.path == "main.py" {
                content.push_str(&notes);
            }
            format!("## Code: {}\n```{}\n{content}```\n\n", f.path, f.language)
        })
        .collect())
}

fn matches(user: &str) -> String {
    let rubric = between(user, "Rubric requirements:\n", "\nCriteria:").unwrap_or("");
    let criteria = user.split("\nCriteria:\n").nth(1).unwrap_or("");
    let reqs: Vec<(usize, String)> = BRACKETED
        .captures_iter(rubric)
        .map(|c| (c[1].parse().unwrap(), c[2].to_string()))
        .collect();
    let rows: Vec<serde_json::Value> = BRACKETED
        .captures_iter(criteria)
        .map(|c| {
            let fact = fact_of(&c[2]).to_string();
            let hits: Vec<usize> = reqs
                .iter()
                .filter(|(_, r)| {
                    !numbers(&fact).is_disjoint(&numbers(r))
                        || words(&fact).intersection(&words(r)).count() >= 2
                })
                .map(|(j, _)| *j)
                .collect();
            json!({"criterion": c[1].parse::<usize>().unwrap(), "matches": hits})
        })
        .collect();
    serde_json::Value::Array(rows).to_string()
}

pub fn reply(req: &ChatRequest) -> Result<String, BackendError> {
    let user = req.last_user();
    Ok(match req.purpose {
        Purpose::GuideExtract => {
            if let Some(rest) = user.strip_prefix("Aspect: ") {
                let aspect = rest.lines().next().unwrap_or("").trim().to_lowercase();
                framework_guides(&aspect).to_string()
            } else if user.starts_with("Paper:") {
                configuration_guides().to_string()
            } else {
                scan(user)
            }
        }
        Purpose::Ground => ground(user),
        Purpose::Standardize => standardize(user),
        Purpose::Filter => {
            r#"{"selected_indices": [1], "reason": "the first member is the most specific"}"#.into()
        }
        Purpose::Skeleton => format!("```python\n{SKELETON}```"),
        Purpose::Fill => {
            let symbol = between(user, "# Target part\n\nTarget: ", "\n")
                .and_then(|l| between(l, "`", "`"))
                .unwrap_or("main");
            format!("```python\n{}```", fill(symbol))
        }
        Purpose::Verify => verification(user),
        Purpose::Plan => plan(user),
        Purpose::Refine => refine(user)?,
        Purpose::Match => matches(user),
    })
}
