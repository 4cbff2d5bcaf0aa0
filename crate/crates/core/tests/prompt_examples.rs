//! The worked examples embedded in the stage prompts, run end to end through
//! the parsing code with scripted replies.

use std::sync::Arc;

use repro_core::fingerprint::{
    exhaustive_scan, semantic_filter, standardize, Criterion, GuideLevel, GuideUnit, SourceRef,
};
use repro_core::gateway::scripted::ScriptedBackend;
use repro_core::gateway::structured::parse_plan_document;
use repro_core::gateway::HashEmbedder;
use repro_core::{load_paper, Gateway, Mode, Purpose};

fn gateway(b: &Arc<ScriptedBackend>) -> Gateway {
    Gateway::builder(Mode::Live)
        .chat(b.clone())
        .embedder(Arc::new(HashEmbedder::new(16)))
        .max_parallel(1)
        .build()
}

fn unit(text: &str, source: Option<SourceRef>) -> GuideUnit {
    GuideUnit {
        id: "cfg-1".into(),
        level: GuideLevel::Configuration,
        text: text.into(),
        aspect: None,
        source,
        grounding_miss: false,
    }
}

fn spans(criteria: &[Criterion]) -> Vec<(&str, Option<&str>)> {
    criteria
        .iter()
        .map(|c| (c.fact.as_str(), c.scope.as_deref()))
        .collect()
}

const OPTIMIZER_REFERENCE: &str = "We tuned hyperparameters separately for each dataset. For experiments on Cora, we used the AdamW optimizer with a learning rate of 1e-4 and weight decay of 0.01. For the Citeseer dataset, we found the standard Adam optimizer with a learning rate of 2e-4 yielded better results.";

const OPTIMIZER_REPLY: &str = r#"[
  {"criterion": "The <fact>AdamW optimizer</fact> is used to train the model <scope>for the dataset Cora</scope>."},
  {"criterion": "A <fact>learning rate of 0.0001</fact> is applied <scope>when using the AdamW optimizer on the Cora dataset</scope>."},
  {"criterion": "A <fact>weight decay of 0.01</fact> is used <scope>when using the AdamW optimizer on the Cora dataset</scope>."},
  {"criterion": "The <fact>Adam optimizer</fact> is used to train the model <scope>for the dataset Citeseer</scope>."},
  {"criterion": "A <fact>learning rate of 0.0002</fact> is applied <scope>when using the Adam optimizer on the Citeseer dataset</scope>."}
]"#;

#[test]
fn optimizer_example_yields_five_criteria() {
    let doc = load_paper(&format!("# Setup\n\n{OPTIMIZER_REFERENCE}\n")).unwrap();
    let b = Arc::new(ScriptedBackend::new());
    b.push(Purpose::Standardize, OPTIMIZER_REPLY);
    let u = unit(
        "In our experiments, we use the AdamW optimizer with a learning rate of 1e-4 and a weight decay of 0.01 on dataset Cora. we use the Adam with a learning rate of 2e-4 on dataset Citeseer.",
        Some(SourceRef {
            paragraph_id: doc.paragraphs.iter().position(|p| p.raw.contains("Cora")).unwrap(),
            sentence_indices: vec![1, 2, 3],
        }),
    );
    let (criteria, warnings) = standardize(&u, &doc, &gateway(&b)).unwrap();
    assert!(warnings.is_empty(), "{warnings:?}");
    assert_eq!(
        spans(&criteria),
        vec![
            ("AdamW optimizer", Some("for the dataset Cora")),
            (
                "learning rate of 0.0001",
                Some("when using the AdamW optimizer on the Cora dataset")
            ),
            (
                "weight decay of 0.01",
                Some("when using the AdamW optimizer on the Cora dataset")
            ),
            ("Adam optimizer", Some("for the dataset Citeseer")),
            (
                "learning rate of 0.0002",
                Some("when using the Adam optimizer on the Citeseer dataset")
            ),
        ]
    );
    assert!(criteria
        .iter()
        .all(|c| c.origin_guide_id == "cfg-1" && c.source == u.source));
    // the grounded sentences travel in the prompt as the reference
    let prompt = b.calls()[0].last_user().to_string();
    assert!(prompt.contains(&format!("Reference Sentence: \"{OPTIMIZER_REFERENCE}\"")));
}

const CLIP_FORMULA: &str = r"L^{CLIP}(\theta) = \hat{\mathbb{E}}_t [ \min(r_t(\theta) \hat{A}_t, \text{clip}(r_t(\theta), 1 - \epsilon, 1 + \epsilon) \hat{A}_t) ]";

#[test]
fn clipped_objective_stays_one_criterion() {
    let doc = load_paper("# Method\n\nThe actor is trained on-policy.\n").unwrap();
    let fact = format!("actor loss is calculated using the PPO clipped objective: {CLIP_FORMULA}");
    let reply = serde_json::json!([{
        "criterion": format!("The <fact>{fact}</fact> <scope>for all on-policy updates</scope>.")
    }])
    .to_string();
    let b = Arc::new(ScriptedBackend::new());
    b.push(Purpose::Standardize, reply);
    let u = unit(
        &format!("The actor loss for on-policy updates is the PPO clipped objective, defined as {CLIP_FORMULA}."),
        None,
    );
    let (criteria, warnings) = standardize(&u, &doc, &gateway(&b)).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(
        spans(&criteria),
        vec![(fact.as_str(), Some("for all on-policy updates"))]
    );
    assert!(b.calls()[0]
        .last_user()
        .contains("Reference Sentence: \"(not available)\""));
}

#[test]
fn scan_example_selects_concrete_sentences() {
    let md = "# Experiments\n\n\
        For the Cora node classification task, our GCN-based model was trained for 200 epochs. \
        This approach is highly effective. \
        We used the AdamW optimizer with a learning rate of 0.01. \
        Performance was measured using the Accuracy metric. \
        Future work could explore other datasets.\n";
    let doc = load_paper(md).unwrap();
    let prose = doc
        .paragraphs
        .iter()
        .filter(|p| p.raw.contains("Cora"))
        .count();
    assert_eq!(prose, 1);
    let b = Arc::new(ScriptedBackend::new());
    b.push(Purpose::GuideExtract, "[1,3,4]");
    let (units, warnings) = exhaustive_scan(&doc, &gateway(&b), 2).unwrap();
    assert!(warnings.is_empty());
    let texts: Vec<&str> = units.iter().map(|u| u.text.as_str()).collect();
    assert_eq!(
        texts,
        vec![
            "For the Cora node classification task, our GCN-based model was trained for 200 epochs.",
            "We used the AdamW optimizer with a learning rate of 0.01.",
            "Performance was measured using the Accuracy metric.",
        ]
    );
    let indices: Vec<usize> = units
        .iter()
        .map(|u| u.source.as_ref().unwrap().sentence_indices[0])
        .collect();
    assert_eq!(indices, vec![1, 3, 4]);
    let listing = b.calls()[0].last_user().to_string();
    assert!(listing.contains("[1]: For the Cora"));
    assert!(listing.contains("[5]: Future work"));
}

#[test]
fn planning_example_output_parses() {
    let reply = "### CONFIG_PLAN\n\n\
        1. In the \"training\" section, decrease the `learning_rate` to 1e-5.\n\
        2. Under `pde.convection`, set `beta` to 40.\n\n\
        ### CODE_PLAN\n\n\
        ## Code: model.py\n\
        1. In the `APTAdapter` class, change the default `scaling_factor` in the constructor from 2.0 to 4.0.\n\n\
        ## Code: main.py\n\
        1. Add a `try...except` block around the `trainer.train()` call.\n";
    let plan = parse_plan_document(reply).unwrap();
    assert_eq!(plan.config_steps.len(), 2);
    assert_eq!(
        plan.config_steps[1],
        "Under `pde.convection`, set `beta` to 40."
    );
    let files: Vec<(&str, usize)> = plan
        .file_plans
        .iter()
        .map(|f| (f.path.as_str(), f.steps.len()))
        .collect();
    assert_eq!(files, vec![("model.py", 1), ("main.py", 1)]);
}

fn crit(id: &str, rendered: &str) -> Criterion {
    let (fact, scope) = repro_core::fingerprint::parse_fact_scope(rendered).unwrap();
    Criterion {
        id: id.into(),
        fact,
        scope,
        rendered: rendered.into(),
        origin_guide_id: "g".into(),
        source: None,
    }
}

fn filter(cluster: &[Criterion], reply: &str) -> Vec<usize> {
    let b = Arc::new(ScriptedBackend::new());
    b.push(Purpose::Filter, reply);
    let refs: Vec<&Criterion> = cluster.iter().collect();
    semantic_filter(&refs, &gateway(&b), 5).unwrap().selected
}

#[test]
fn filter_examples_select_expected_members() {
    let abstract_vs_concrete = [
        crit("a", "The <fact>model architecture</fact> is <scope>inspired by Transformers</scope>."),
        crit("b", "The <fact>model uses 12 layers of Transformer encoders</fact> <scope>in its main architecture</scope>."),
        crit("c", "The <fact>model's design</fact> considers <scope>long-range dependencies</scope>."),
    ];
    assert_eq!(
        filter(
            &abstract_vs_concrete,
            r#"{"selected_indices": [2], "reason": "concrete"}"#
        ),
        vec![1]
    );

    let two_phases = [
        crit(
            "a",
            "A <fact>dropout of 0.5</fact> is applied <scope>during pre-training</scope>.",
        ),
        crit(
            "b",
            "A <fact>dropout of 0.6</fact> is applied <scope>during fine-tuning</scope>.",
        ),
    ];
    assert_eq!(
        filter(
            &two_phases,
            r#"{"selected_indices": [1, 2], "reason": "distinct"}"#
        ),
        vec![0, 1]
    );
}
