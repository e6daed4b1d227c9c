//! Prompt templates and the stage-name registry.
//!
//! Template syntax: `{name}` is a variable slot (name = `[A-Za-z_][A-Za-z0-9_]*`),
//! `{{` / `}}` are literal braces, and any other brace passes through
//! unchanged (the prompts embed JSON examples). A template's
//! `required_vars` are discovered from its body at construction, so a
//! render with all of them bound can never leave an unbound slot.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::GatewayError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    pub required_vars: Vec<String>,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Self {
        let body = body.into();
        let required_vars = scan_placeholders(&body);
        PromptTemplate {
            name: name.into(),
            body,
            required_vars,
        }
    }

    /// Substitute every variable slot. Byte-identical output for identical
    /// inputs; extra vars are ignored; a missing required var is an error.
    pub fn render(&self, vars: &BTreeMap<String, String>) -> Result<String, GatewayError> {
        let mut out = String::with_capacity(self.body.len());
        let bytes = self.body.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'{' if bytes.get(i + 1) == Some(&b'{') => {
                    out.push('{');
                    i += 2;
                }
                b'}' if bytes.get(i + 1) == Some(&b'}') => {
                    out.push('}');
                    i += 2;
                }
                b'{' => {
                    if let Some((name, end)) = parse_ident(bytes, i + 1) {
                        match vars.get(name) {
                            Some(value) => out.push_str(value),
                            None => return Err(GatewayError::MissingVariable(name.to_string())),
                        }
                        i = end + 1;
                    } else {
                        out.push('{');
                        i += 1;
                    }
                }
                _ => {
                    // The body is valid UTF-8; copy the full char.
                    let ch = self.body[i..].chars().next().unwrap();
                    out.push(ch);
                    i += ch.len_utf8();
                }
            }
        }
        Ok(out)
    }
}

/// Parse an identifier starting at `start`, returning (name, index of the
/// closing brace) when the token is a well-formed `{ident}` slot.
fn parse_ident(bytes: &[u8], start: usize) -> Option<(&str, usize)> {
    let mut j = start;
    while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
        j += 1;
    }
    if j == start || j >= bytes.len() || bytes[j] != b'}' {
        return None;
    }
    if !bytes[start].is_ascii_alphabetic() && bytes[start] != b'_' {
        return None;
    }
    std::str::from_utf8(&bytes[start..j])
        .ok()
        .map(|name| (name, j))
}

fn scan_placeholders(body: &str) -> Vec<String> {
    let bytes = body.as_bytes();
    let mut names = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => i += 2,
            b'}' if bytes.get(i + 1) == Some(&b'}') => i += 2,
            b'{' => {
                if let Some((name, end)) = parse_ident(bytes, i + 1) {
                    if !names.iter().any(|n| n == name) {
                        names.push(name.to_string());
                    }
                    i = end + 1;
                } else {
                    i += 1;
                }
            }
            _ => i += 1,
        }
    }
    names
}

/// Stage-keyed template names.
pub mod names {
    pub const DECOMPOSE: &str = "decompose";
    pub const COMPOSE: &str = "compose";
    pub const COMPOSE_VERIFY: &str = "compose_verify";
    pub const COMPOSE_REFINE: &str = "compose_refine";
    pub const VALIDITY: &str = "validity";
    pub const SELF_CONSISTENCY: &str = "self_consistency";
    pub const DATA_GENERAL: &str = "data_general";
    pub const DATA_HELPFULNESS: &str = "data_helpfulness";
    pub const DATA_INSTRUCTION_FOLLOWING: &str = "data_instruction_following";
    pub const DATA_UNCERTAINTY: &str = "data_uncertainty";
    pub const DATA_TRUTHFULNESS: &str = "data_truthfulness";
    pub const ON_TASK_JUDGE: &str = "on_task_judge";
    /// Response generation sends the instruction itself; the label exists
    /// for mock keying and request accounting.
    pub const GENERATE: &str = "generate";

    /// Template name per scoring dimension, in canonical dimension order.
    pub const DATA_SCORING: [(&str, &str); 5] = [
        ("general", DATA_GENERAL),
        ("helpfulness", DATA_HELPFULNESS),
        ("instruction_following", DATA_INSTRUCTION_FOLLOWING),
        ("uncertainty", DATA_UNCERTAINTY),
        ("truthfulness", DATA_TRUTHFULNESS),
    ];
}

const DECOMPOSE_BODY: &str = r#"You are a precise assistant for parsing and analyzing user instructions. Given any input query, your task is to extract all structured information as follows:

Definitions:
- A "constraint" is any explicit restriction, condition, or requirement imposed by the query (about format, style, content, length, etc.).
- The "Basic Query" is the core task or request with all such constraints removed—stating only the essential goal.
- A "Task Type" is the general category or nature of the task being requested (e.g., summarization, translation, classification, creative writing, data extraction, formatting, etc.).

Process:
1. **Language Detection:** Detect the main language(s) present in the query (ISO 639-1, e.g., "en", "es").
2. **Simple Queries:** If the query is simple, direct, and contains no explicit requirements, respond only as:
   {
     "Complex": "False"
   }
3. **Complex Queries** (with constraints):
   a. Identify all task types implied in the query (e.g., "summarization", "creative writing", "math problem", etc.).
   b. For each task type found:
      - Extract the **Basic Query** (state the central goal, without any constraints).
      - Extract all explicit constraints. For each constraint:
         * Assign a concise category from: Content, Numerical, Style/Tone, Format, Language, Input Placeholder.
         * Give the simplified query that results from removing this constraint but keeping all others.
   c. Return results in JSON format as follows (must be valid JSON in English):

{
    "Complex": "True",
    "Language": ["en"],
    "Tasks": [
        {
            "Task Type": "...",
            "Basic Query": "...",
            "Constraints": [
                {"category": "...", "constraint": "...", "simplified query": "..."}
            ]
        }
        // ... (one object per detected task type)
    ]
}

Guidelines:
- If there are multiple task types, repeat the extraction for each.
- Each constraint should appear only once under its relevant task type.
- Category keywords: Content, Numerical, Style/Tone, Format, Language, Input Placeholder.
- Only include explicit "Constraints" (not just descriptive or illustrative details unless they restrict the response).
- Do not add extra commentary, and do not include sample queries or other meta-text outside the JSON.

<query>
{query}
</query>
"#;

const COMPOSE_BODY: &str = r#"You are an expert in generating synthetic instruction from given base user query and constraints.
Definition of Constraint: The smallest unit of restriction or requirement that the instruction imposes on the task.

<base_query>
{query}
</base_query>

<constraints>
{constraints}
</constraints>

Your task is the generate a compact instruction but contains all the information from base user query and constraints. For the placeholder, please add line breaks around them, e.g. `\n\n [SECTION SUMMARIES]\n{{placeholder}}\n[END OF SECTION SUMMARIES] \n\n`. Avoid adding any extra information beyond the base query, constraints and placeholder. The output should be in English with JSON format. Here is an output template:
{{"Created Prompt": "created prompt"}}
"#;

const COMPOSE_VERIFY_BODY: &str = r#"<constraints>
{constraints}
</constraints>

<generated_prompt>
{prompt}
</generated_prompt>

Given constraints and a generated prompt, your task is to check if each constraint is covered in the generated prompt. Reply "yes" or "no" for each constraint. When answering "no", include a reason to explain why the constraint is missing. The final answer should be in JSON format. Here is an output template:
{{
    "1": {{
        "reason": "Explain why this constraint is missing",
        "result": "yes or no",
    }},
    "2": {{
        "reason": "Explain why this constraint is missing",
        "result": "yes or no",
    }},
}}
Let's think step by step and output the final answer at the last step.
"#;

const COMPOSE_REFINE_BODY: &str = r#"You are an expert in generating synthetic instruction from given base user query and constraints.
Definition of Constraint: The smallest unit of restriction or requirement that the instruction imposes on the task.

<base_query>
{query}
</base_query>

<constraints>
{constraints}
</constraints>

<critique>
{critique}
</critique>

Your task is the generate a compact instruction but contains all the information from base user query and constraints.
Pay extra attention to the critique so that the generated instruction contains all the constraint information.
For the placeholder, please add line breaks around them, e.g. `\n\n[SECTION SUMMARIES]\n{{placeholder}}\n[END OF SECTION SUMMARIES]\n\n`.
Avoid adding any extra information beyond the base query, constraints.

The output should be in English with JSON format. Here is an output template:
{{"Created Prompt": "created prompt"}}
"#;

const VALIDITY_BODY: &str = r#"Please evaluate the following AI task prompt for relevance, assumption correctness, and alignment with intent:

1. Determine how relevant each part of the prompt is to the main goal or question.
2. Identify any incorrect assumptions or factual inaccuracies.
3. Evaluate how well the prompt reflects its intended outcome or request.
4. Offer suggestions to improve relevance and clarity while maintaining the core intent.
5. Rate the overall validity of the task prompt (1-5, where 5 means perfectly valid).

Feel free to use specific examples from the prompt to illustrate your points.

Here is the AI task prompt:
<AI_task_prompt>
{task_prompt}
</AI_task_prompt>

Please think step-by-step and output your final judgment in the following JSON format.
{{"reason": "Your reason", "score": "Score from 1 to 5"}}
"#;

const SELF_CONSISTENCY_BODY: &str = r#"Please analyze the given task prompt for logical contradictions and inconsistencies in using the following requirements:
1. List any direct contradictions (where one requirement directly conflicts with another)
2. Identify any implicit contradictions (where requirements indirectly conflict)
3. Point out any ambiguous requirements that could lead to conflicts
4. Suggest ways to resolve these contradictions while maintaining the core intent
5. Rate the overall logical consistency of the prompt (1-5, where 5 is perfectly consistent)
Feel free to use specific examples from the prompt to illustrate any contradictions you find.

Here is the AI task prompt:
<AI_task_prompt>
{task_prompt}
</AI_task_prompt>

Please think step-by-step and output your final judgment in the following JSON format.
{{"reason": "Your reason", "score": "Score from 1 to 5"}}
"#;

const DATA_GENERAL_BODY: &str = r#"You are a quality evaluator to judge the output quality given by an AI assistant model. Given the AI assistant's system_message  (if any) and user_query, you need to evaluate whether the assistant_output satisfies the requirements in the AI assistant's system_message (if any) and user_query, and whether the assistant_output can be directly shown to human users.
You need to first produce a rationale of the reasoning process, followed by a score value. The score value is an integer from 1 to 5:
* 1 means the output quality is unacceptable for the task and cannot be shown to the users;
* 2 means the output quality is low, and needs significant modification to satisfy the requirement in the task prompt and presented to users;
* 3 means the output quality is acceptable, and needs some modest modification to address the requirement in the task prompt to show to users;
* 4 means the output quality is quite good, although the output can be made a bit more precise and concise to show to users;
* 5 means the output quality is prefect for the given task and can be shown to the users.

Here are the system message (if any), user query and assistant output:
{system_message}

<user_query>
{user_query}
</user_query>

<assistant_output>
{assistant_output}
</assistant_output>

Please think step-by-step and output your final judgment in the following JSON object:
{{"reason": "Your reason", "score": "Score from 1 to 5"}}
"#;

const DATA_HELPFULNESS_BODY: &str = r#"You are a quality evaluator to judge the output quality given by an AI assistant model, focusing on informativeness and helpfulness.
Given the AI assistant's system_message (if any) and user_query, you need to evaluate if the assistant_output fulfill the task objective and provide high-quality, correct, and, informative content.

Please obey the following guidelines for correctness, informativeness, and helpfulness.

<correctness>
Accurate computation, reasoning steps, and outputs without misunderstandings or fabrication.
</correctness>

<informativeness>
Assign a numeric identifier (or “None”) from 1 to 3 for each type of informativeness.
1. Clarity and Relevance: Ensure the response relates to the task and seek clarifications if needed.
2. Useful and Comprehensive Information: Provide relevant background, reasoning steps, or detailed description.
3. Not Lengthy, No Repetition: Avoid verbosity or recycling content.
</informativeness>

<helpfulness>
Helpfulness assessment emphasizes Overall Quality regarding correctness and informativeness.

Score 1 to 5 based on the extent of helpfulness, regarding both informativeness and correctness:
1. Severely Incorrect: Contains significant inaccuracies or fabricated content, even if comprehensive information is provided.
2. Partially Incorrect: Contains errors that may cause confusion, even though comprehensive information is present.
3. Correct: Accurate and provides useful information that meets the task's requirements.
4. Highly Informative: Accurate and extensive, providing valuable insights and detailed information.
5. Outstandingly Helpful: Both accurate and in-depth, offering profound insights and comprehensive information.
</helpfulness>

Here are the system message (if any), user query and assistant output:
{system_message}

<user_query>
{user_query}
</user_query>

<assistant_output>
{assistant_output}
</assistant_output>

Please think step-by-step and output your final judgment in the following JSON object:
{{"reason": "Your reason", "score": "Score from 1 to 5"}}
"#;

const DATA_INSTRUCTION_FOLLOWING_BODY: &str = r#"You are a quality evaluator to judge the output quality given by an AI assistant model, focusing on instruction following. Given the AI assistant's system_message (if any), user_query, and assistant_output, you need to evaluate the alignment between the assistant_output, and AI assistant's system_message (if any) and user_query as a whole.

Instruction Components: Task Goal (intended outcome), Restrictions (text styles, formats, or designated methods, etc).
Please first produce a rationale of your reasoning process, followed by a score value from 1 to 5, where:
* 1 means Irrelevant: No alignment.
* 2 means Partial Focus: Addresses one aspect poorly.
* 3 means Partial Compliance: Meets goal or restrictions, neglecting other. And acknowledges both but slight deviations.
* 4 means Almost There: Near alignment, minor deviations.
* 5 means Comprehensive Compliance: Fully aligns, meets all requirements.

Here are the system message (if any), user query and assistant output:
{system_message}

<user_query>
{user_query}
</user_query>

<assistant_output>
{assistant_output}
</assistant_output>

Please think step-by-step and output your final judgment in the following JSON object:
{{"reason": "Your reason", "score": "Score from 1 to 5"}}
"#;

const DATA_UNCERTAINTY_BODY: &str = r#"You are a quality evaluator to judge the output quality given by an AI assistant model, focusing on honesty and uncertainty
expression assessment.

Given the AI assistant's system_message (if any), user_query, and assistant_output, you need to access how well the model conveys honesty and uncertainty. Please evaluate if the model's confidence aligns with assistant_output correctness.

- Indicators of Uncertainty:
1. Weakeners: e.g., :"I guess," "probably."
2. Refusal to answer.
3. Verbalized confidence scores: [0, 20] low; (20, 40] uncertain; (40, 60] moderate; (60, 80] leaning confident; (80, 100] high.
- No uncertainty expression indicate confidence.
- Response Correctness: Align with ground truth, or provide accurate content without fabrication.

Please first produce a rationale of your reasoning process, followed by a score value from 1 to 5, where:
* 1 means Confidently Incorrect: Confident but entirely wrong.
* 2 means Confident with Significant Mistakes/Unconfident Incorrect:
  - Confident but contains major errors.
  - Unconfident and entirely wrong.
* 3 means Uncertain/"I Don't Know"/Subtle Mistakes:
  - "I don't know" or declines.
  - Confident but contains minor errors.
  - Unconfident and contains significant mistakes.
* 4 means Correct but Uncertain/Expressed Subtle Mistakes:
  - Correct but unconfident.
  - Makes subtle mistakes but expresses uncertainty without specifying the exact area of doubt.
* 5 means Correct and Confident/Precisely Express Uncertainty:
  - Correct and confident.
  - Makes mistakes, but precisely acknowledges minor errors and indicates uncertainty on potential mistakes.

Here are the system message (if any), user query and assistant output:
{system_message}

<user_query>
{user_query}
</user_query>

<assistant_output>
{assistant_output}
</assistant_output>

Please think step-by-step and output your final judgment in the following JSON object:
{{"reason": "Your reason", "score": "Score from 1 to 5"}}
"#;

const DATA_TRUTHFULNESS_BODY: &str = r#"You are a quality evaluator to judge the output quality given by an AI assistant model, focusing on truthfulness and hallucination.
Given the AI assistant's system_message (if any), user_query, and assistant_output, you need to evaluate the model's accuracy in providing information in assistant_output without introducing misleading or fabricated details.
Please obey the following guidelines for hallucination.
<hallucination>
Assign numeric identifier (or “None”) from 1 to 3 for each type of hallucination below. Please output all the applicable types.
1. Contradictory with the World (Factual Error): Entities, locations, concepts, events that conflict with established knowledge.
2. Contradictory with Instruction and Input: Responses diverge, introducing new facts not aligned with instructions or inputs.
3. Self-Contradictory/Logical Error: Responses contain internal contradictions or logical errors within each independent text.
Scoring: Rate outputs 1 to 5 based on extent of hallucination:
1. Completely Hallucinated: Entirely unreliable due to hallucinations.
2. Severe Hallucination: Nearly half contains hallucinations, severe deviation from main points.
3. Partial Hallucination / Misunderstanding: Overall truthful, partial misunderstanding due to hallucinations.
4. Insignificant Hallucination: Mostly truthful, slight hallucination not affecting main points.
5. No Hallucination: Free of hallucinations.
</hallucination>
Here are the system message (if any), user query and assistant output:
{system_message}

<user_query>
{user_query}
</user_query>

<assistant_output>
{assistant_output}
</assistant_output>

Please think step-by-step and output your final judgment in the following JSON object:
{{"reason": "Your reason", "score": "Score from 1 to 5"}}
"#;

const ON_TASK_JUDGE_BODY: &str = r#"You are a strict evaluator of task alignment. Given a seed task description and a candidate instruction, decide whether the candidate instruction still targets the same underlying task as the seed. A candidate is on-task when a response satisfying it would also serve the seed task's purpose; added, removed, or altered constraints do not make it off-task as long as the core task is unchanged.

<seed_task>
{seed_task}
</seed_task>

<candidate_instruction>
{candidate}
</candidate_instruction>

Please think step-by-step and output your final judgment in the following JSON object:
{{"reason": "Your reason", "on_task": "yes or no"}}
"#;

/// A name-keyed set of templates, preloaded with every pipeline stage
/// prompt.
#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, PromptTemplate>,
}

impl TemplateRegistry {
    pub fn builtin() -> Self {
        let mut registry = TemplateRegistry {
            templates: BTreeMap::new(),
        };
        for (name, body) in [
            (names::DECOMPOSE, DECOMPOSE_BODY),
            (names::COMPOSE, COMPOSE_BODY),
            (names::COMPOSE_VERIFY, COMPOSE_VERIFY_BODY),
            (names::COMPOSE_REFINE, COMPOSE_REFINE_BODY),
            (names::VALIDITY, VALIDITY_BODY),
            (names::SELF_CONSISTENCY, SELF_CONSISTENCY_BODY),
            (names::DATA_GENERAL, DATA_GENERAL_BODY),
            (names::DATA_HELPFULNESS, DATA_HELPFULNESS_BODY),
            (
                names::DATA_INSTRUCTION_FOLLOWING,
                DATA_INSTRUCTION_FOLLOWING_BODY,
            ),
            (names::DATA_UNCERTAINTY, DATA_UNCERTAINTY_BODY),
            (names::DATA_TRUTHFULNESS, DATA_TRUTHFULNESS_BODY),
            (names::ON_TASK_JUDGE, ON_TASK_JUDGE_BODY),
        ] {
            registry.insert(PromptTemplate::new(name, body));
        }
        registry
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert(template.name.clone(), template);
    }

    pub fn get(&self, name: &str) -> Result<&PromptTemplate, GatewayError> {
        self.templates
            .get(name)
            .ok_or_else(|| GatewayError::UnknownTemplate(name.to_string()))
    }

    pub fn render(
        &self,
        name: &str,
        vars: &BTreeMap<String, String>,
    ) -> Result<String, GatewayError> {
        self.get(name)?.render(vars)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(|s| s.as_str())
    }
}

/// Render a constraint list the way the compose/verify prompts expect:
/// one numbered line per constraint.
pub fn format_constraint_list(texts: &[String]) -> String {
    texts
        .iter()
        .enumerate()
        .map(|(i, text)| format!("{}. {}", i + 1, text))
        .collect::<Vec<_>>()
        .join("\n")
}
