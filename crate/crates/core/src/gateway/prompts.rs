//! Prompt templates and placeholder rendering.
//!
//! Placeholders are `{snake_case}` names. Rendering is a single pass, so a
//! bound value that itself contains braces is never expanded again.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::retrieval::CandidateSet;

pub const TEXTUAL_PROTOTYPE: &str = "\
You are an expert taxonomist specializing in fine-grained visual recognition.

Input:
\u{2022} Category: {category_name}
\u{2022} Reference: [Set of Support Images]

Task: Generate a comprehensive and discriminative description that captures the key visual characteristics that distinguish this category from other similar categories.

Focus on:
1. Distinctive physical features
2. Color patterns and markings
3. Size and proportions
4. Behavioral characteristics (if applicable)
5. Unique identifying traits

Constraint: The description should be concise but informative, suitable for fine-grained visual recognition task.";

pub const SYSTEM2_INFERENCE: &str = "\
You are a fine-grained recognition expert. Your task is to identify the specific sub-category of the provided image.

Context Provided:
1.Candidate Classes (highly likely to contain the correct option):
{candidate_text}

2. Expert Guidance (Retrieved Experience):
{experience_context}

Task: Please analyze the image step by step and provide:
1. Your reasoning chain (Chain-of-Thought) based on the visual evidence and expert guidance.
2. Your final prediction (only the category name).

Output Format:
Reasoning: [your step-by-step reasoning]
Prediction: [category name]";

/// Starting self-belief: the four-step recognition strategy.
pub const INITIAL_SELF_BELIEF: &str = "\
You are an expert in fine-grained visual recognition. Please follow these steps to identify the object:

1. Observe: Look at the overall object and identify its coarse category.
2. Localize: Identify the most discriminative local parts.
3. Compare: Recall visual characteristics of candidate subcategories.
4. Decide: Choose the most likely class based on the details.";

/// Construction-time classification prompt: the current self-belief, the
/// System-1 candidates, and the answer-format constraint.
pub const STEP1_SELF_BELIEF: &str = "\
{current_self_belief}

Candidate Classes:
{candidate_text}

Constraint: Answer ONLY with the final class name.";

pub const STEP2_DIAGNOSIS: &str = "\
You are an expert in fine-grained visual recognition. Analyze this specific failure case where the model incorrectly predicted '{predicted_category}' but the correct answer is '{true_category}'.

Context:
\u{2022} Model's Reasoning: {model_reasoning}
\u{2022} Top Candidates: {candidates_info}
\u{2022} Definition ({true_category}): {correct_category_desc}
\u{2022} Definition ({predicted_category}): {predicted_category_desc}

Task: Focus ONLY on the visual evidence in this image.
1. Locate the specific region where the visual feature contradicts the prediction.
2. Compare this feature against the category definitions provided.
3. Identify the exact visual attribute (e.g., tail shape, beak color) that caused confusion.

Constraint: Do not generalize yet. Provide a detailed diagnosis of this specific image instance. Output format: Visual Evidence and Direct Cause.";

pub const STEP3_ABSTRACTION: &str = "\
You are a knowledge engineer. Your task is to distill a specific failure diagnosis into a universal, abstract rule to guide future predictions.

Input Data:
\u{2022} Conflict: {true_category} vs. {predicted_category}
\u{2022} Diagnosis: {step2_diagnosis_output}

Task: Formulate a concise, high-level verification rule.
1. Abstract: Remove references to \"this image\". Focus on the concept.
2. Actionable: The rule should be a direct instruction for what to check.
3. Discriminative: Clearly distinguish the two categories.

Constraint: Return ONLY the rule text (under 30 words).

Example Output: \"To distinguish Husky from Malamute, check the tail curvature: Husky tails are straight, while Malamute tails curl over the back.\"";

pub const STEP4_UPDATE: &str = "\
Based on the failure analysis and new insights, update the Self-Belief strategy.

Input:
\u{2022} Current Strategy: {current_self_belief}
\u{2022} New Rule/Insight: {failure_analysis}

Task: Update the strategy to:
1. Maintain the core recognition framework.
2. Add specific guidance for handling similar difficult cases.
3. Emphasize discriminative features that were previously overlooked.

Constraint: Provide only the updated Self-Belief strategy without additional explanation.";

/// Rendered in place of `{experience_context}` when nothing was retrieved.
pub const NO_EXPERIENCE: &str = "No prior experience available.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplateSet {
    pub textual_prototype: String,
    pub system2_inference: String,
    pub step1_self_belief: String,
    pub step2_diagnosis: String,
    pub step3_abstraction: String,
    pub step4_update: String,
}

impl Default for PromptTemplateSet {
    fn default() -> Self {
        Self {
            textual_prototype: TEXTUAL_PROTOTYPE.into(),
            system2_inference: SYSTEM2_INFERENCE.into(),
            step1_self_belief: STEP1_SELF_BELIEF.into(),
            step2_diagnosis: STEP2_DIAGNOSIS.into(),
            step3_abstraction: STEP3_ABSTRACTION.into(),
            step4_update: STEP4_UPDATE.into(),
        }
    }
}

/// Names of every `{placeholder}` in `template`, in order of appearance.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match placeholder_len(after) {
            Some(len) => {
                out.push(&after[..len]);
                rest = &after[len + 1..];
            }
            None => rest = after,
        }
    }
    out
}

/// Length of a valid placeholder name at the start of `s` if it is closed
/// by `}`.
fn placeholder_len(s: &str) -> Option<usize> {
    let len = s
        .bytes()
        .take_while(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'_')
        .count();
    (len > 0 && s.as_bytes().get(len) == Some(&b'}')).then_some(len)
}

pub fn render(template: &str, bindings: &HashMap<&str, String>) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match placeholder_len(after) {
            Some(len) => {
                let name = &after[..len];
                let value = bindings
                    .get(name)
                    .ok_or_else(|| Error::MissingPlaceholder(name.to_string()))?;
                out.push_str(value);
                rest = &after[len + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Convenience wrapper taking `(name, value)` pairs.
pub fn render_with(template: &str, pairs: &[(&str, &str)]) -> Result<String> {
    let bindings: HashMap<&str, String> =
        pairs.iter().map(|(k, v)| (*k, (*v).to_string())).collect();
    render(template, &bindings)
}

/// Numbered candidate list in System-1 order.
pub fn candidate_text(cs: &CandidateSet) -> String {
    cs.entries
        .iter()
        .enumerate()
        .map(|(i, e)| format!("{}. {}", i + 1, e.display_name))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Candidate list with confidences, used in failure diagnosis.
pub fn candidates_info(cs: &CandidateSet) -> String {
    cs.entries
        .iter()
        .map(|e| format!("{} ({:.4})", e.display_name, e.p_hat))
        .collect::<Vec<_>>()
        .join("; ")
}
