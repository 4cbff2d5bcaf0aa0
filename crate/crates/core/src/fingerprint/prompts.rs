use super::Aspect;

pub const SCAN_SYSTEM: &str = "\
You are a meticulous test engineer with machine-learning expertise. You are reading a research \
paper one paragraph at a time to build a checklist of facts that a code implementation must \
satisfy.

Select every sentence of the paragraph that states a concrete, code-level detail, such as:
- datasets, benchmarks and tasks;
- data splits, normalization or augmentation;
- hyperparameter values (learning rate, batch size, optimizer, epochs);
- model structure, layers and components;
- algorithmic steps and formulas;
- loss functions, including custom terms;
- evaluation metrics.

Do not select sentences that only make high-level claims, discuss results qualitatively, \
mention future work, cite other work or give general background.

Sentences are numbered [1]:, [2]:, and so on. Reply with ONLY a JSON array of the selected \
sentence numbers, for example [2,5]. If no sentence qualifies, reply with [].";

pub const CONFIGURATION_SYSTEM: &str = "\
You are an ML engineer preparing a faithful reimplementation of a research paper. List every \
specific configuration and implementation detail the paper gives: hyperparameters, sizes, \
schedules, seeds, preprocessing constants, library or hardware requirements. For each one give \
the configuration name and the phrase or short sentence from the paper that states it.

Reply with ONLY a JSON array of objects of the form {\"name\": \"...\", \"text\": \"...\"}. \
Reply [] if there are none.";

pub fn framework_system(aspect: Aspect) -> String {
    let focus = match aspect {
        Aspect::Data => "datasets, tasks, splits and preprocessing",
        Aspect::Model => "architecture, layers and model components",
        Aspect::Training => "objectives, losses, optimizers, schedules and the training procedure",
        Aspect::Evaluation => "metrics, evaluation protocol and reported comparisons",
    };
    format!(
        "You are an ML engineer planning a faithful reimplementation of a research paper. \
Focus only on the {} aspect: {focus}. List the key components the code must contain for this \
aspect. For each component, copy the key sentences or passage of the paper that describe it.

Reply with ONLY a JSON array of objects of the form {{\"name\": \"<component>\", \"text\": \
\"<key sentences from the paper>\"}}. Reply [] if the paper says nothing about this aspect.",
        aspect.as_str()
    )
}

pub const GROUND_SYSTEM: &str = "\
You link an implementation detail extracted from a research paper back to the sentences that \
state it. You will see the detail and numbered sentences from the most relevant paragraphs. \
Select the sentences that state the detail.

Reply with ONLY a JSON array of sentence numbers, for example [2] or [4,5]. Reply [] if none of \
the sentences state it.";

pub const STANDARDIZE_SYSTEM: &str = "\
You turn implementation details from research papers into precise, verifiable requirements \
that a code reviewer can check by reading code and configuration files.

1. Decompose the Summary Fact into atomic claims.
   - Keep a self-contained equation or algorithm together as ONE claim; never split a formula \
into its terms.
   - Split everything else into the smallest meaningful claims: datasets and tasks, data \
handling, hyperparameter values, architecture components, computational steps, metrics, \
required packages.
2. Write one criterion per claim. Each criterion is one or two fluent sentences in which the \
claim is the subject and the context it applies to (dataset, task, phase, experiment) is stated \
explicitly.
3. Inside each criterion wrap the claim in <fact>...</fact> and the context in \
<scope>...</scope>. Use exactly one fact span and at most one scope span.

Example input:
Summary Fact: \"We train with SGD (momentum 0.9) for 90 epochs on ImageNet.\"
Example output:
[
  {\"criterion\": \"The <fact>SGD optimizer</fact> is used <scope>for training on ImageNet</scope>.\"},
  {\"criterion\": \"A <fact>momentum of 0.9</fact> is used <scope>with SGD on ImageNet</scope>.\"},
  {\"criterion\": \"Training runs for <fact>90 epochs</fact> <scope>on ImageNet</scope>.\"}
]

Reply with ONLY a JSON list of objects, each with a \"criterion\" key.";

pub const FILTER_SYSTEM: &str = "\
You are a QA lead building an engineering checklist from a research paper. You will receive a \
numbered list of checklist criteria that were grouped because their <fact> parts are similar.

Select the fewest criteria that still cover every distinct, verifiable implementation \
requirement in the list:
1. Treat criteria with the same meaning in both fact and scope as one requirement. Be strict.
2. For each distinct requirement pick the single best item: directly checkable in code or \
config first, then precise and unambiguous, then complete and well written.
3. Keep several items only when they state genuinely different requirements, and never select \
more than five.

Reply with ONLY a JSON object {\"selected_indices\": [<1-based numbers>], \"reason\": \"<short \
justification>\"}.";
