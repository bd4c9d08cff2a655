//! Prompt templates sent to a remote generator.
//!
//! Placeholders use `{name}` syntax and are filled by [`fill`].

use super::ErrorType;

pub const NOTE_TO_JSON: &str = r#"Task: Given a clinical note, extract specific information and structure it into a JSON format according to the rules and schema provided.

Instructions:
1. Output Format:
- The response should be in JSON format following the schema outlined below.

2. Sections to Ignore:
- Do not include any content labeled or titled "Assessment and Plan".

3. Content Extraction:
- Extract the remaining content of the clinical note and organize it into different problems.
- Problems can be identified using a numbered problem list within the note.
- When there's a section titled "Follow-up instructions:", treat this as a separate problem.

4. For Each Problem:
- Extract each step as a separate sentence.
- Ignore bullet point symbols, such as -, •, or other similar characters, when extracting steps.
- If the words "Assessment:" or "Plan:" appear in the clinical note, include those words at the beginning of the first sentence that follows their occurrence.

5. Adding Ratings:
- For each step, add a field called "Step_score" with the value "+".
- For each problem, add a field called "Problem_score" and "Problem_completeness_score" with the value "+".

6. Add Sequential Numbering:
- For each problem, add a field called "Problem_no". Number them sequentially starting from "1", and use strings (e.g., ""1"", ""2"").
- For each step, add a field called "Step_no". Number them sequentially starting from "1", and use strings.

7. Add Note Score:
- Add a field called "Note_completeness_score" with the value "+" at the root level of the JSON.

8. JSON Schema:

{
"Problems": [
  {
    "Problem": "Problem Description",
    "Problem_no": "1",
    "Problem_score": "+",
    "Steps": [
      {
        "Step": "First step of the problem.",
        "Step_no": "1",
        "Step_score": "+"
      },
      {
        "Step": "Second step of the problem.",
        "Step_no": "2",
        "Step_score": "+"
      }
    ],
    "Problem_completeness_score": "+",
  }
],
"Note_completeness_score": "+"
}

Here is an example: {example_note}

Desired output: {example_json}

Here is the clinical note for your task: {note}"#;

pub const ERROR_TEMPLATE: &str = r#"You are provided with a doctor-patient conversation and its corresponding clinical note in JSON format. Your task is to introduce 10 errors into the clinical note, following the instructions below.

Instructions:
{error_type_instruction}
- Number of Errors: Introduce 10 errors from the list above at the "Problem" or "Step" level.
- These errors can be introduced at the "Step" field or "Problem" field.
- Do not change other fields such as "Problem_no," "Problem_score," "Step_no," "Step_score" or "Problem_completeness_score."
- Recording Changes: For each change, only include the following information:
    - "Error_type": The type of error introduced.
    - "Problem_no": The number of the affected problem.
    - "Step_no": The number of the affected step. If change is at the problem level, output null.
    - "Error_level": With a value of "Problem" or "Step."
    - "Detailed_error": A description of the error introduced.
    - "New_content": The new "Problem" or "Step" content after modification.
    - "Original_content": The original "Problem" or "Step" content before modification.
- Output JSON format with an "Errors" item only, including all information below. Do not include the original JSON file.

Here is the conversation: {dialogue}

Here is the clinical note for your task: {problems}"#;

pub const FACTUAL_INACCURACY_INSTRUCTION: &str = r#"Error type is "Factual Inaccuracy": Introduce detailed factual errors related to the information or topics discussed in the conversation but not supported by it. Examples include changing "left" to "right," altering medication names, or modifying the follow-up timeframe from "1 month" to "6 months.""#;

pub const HALLUCINATION_INSTRUCTION: &str = r#"Error type is "Hallucination": Add completely unrelated subject entities that were not discussed in the conversation. This may include fabricated content related to symptoms, diagnostics, treatments, or other aspects. The new information should be major and entirely made up, different from minor factual inaccuracies."#;

pub const UNHELPFULNESS_INSTRUCTION: &str = r#"Error type is "Unhelpfulness": Rewrite sentences in a vague, incomplete, or confusing manner. Remove important details, use imprecise language, and avoid specific medical terminology or clear instructions so that the note becomes unhelpful and unclear."#;

// The JSON recording section mirrors ERROR_TEMPLATE with paraphrase fields.
pub const PARAPHRASE_TEMPLATE: &str = r#"You are provided with a doctor-patient conversation and its corresponding clinical note in JSON format. Your task is to introduce 20 paraphrases based on the original note, following the instructions below.

Instructions:
- You want to paraphrase original sentences to improve semantic diversity of the clinical note. Please make sure the new sentence faithfully represents the same information and knowledge of the original sentence, without adding any new information. Please keep the same academic style but easy to follow, as you would expect from a medical note.
- Number of Errors: Introduce 20 different paraphrases at the "Step" level. Do not introduce paraphrases at the "Problem" level.
- It is ok to introduce multiple paraphrases for the same step. Ideally, we want to introduce paraphrases at various steps.
- Do not change other fields such as "Problem_no," "Problem_score," "Step_no," "Step_score" or "Problem_completeness_score."
- Recording Changes: For each change, only include the following information:
    - "Problem_no": The number of the affected problem.
    - "Step_no": The number of the affected step.
    - "New_content": The new "Step" content after paraphrasing.
    - "Original_content": The original "Step" content before paraphrasing.
- Output JSON format with a "Paraphrases" item only, including all information above. Do not include the original JSON file.

Here is the conversation: {dialogue}

Here is the clinical note: {problems}"#;

pub const QUALITY_TEMPLATE: &str = r#"You are provided with a synthetic doctor-patient conversation and its corresponding clinical note in JSON format. Your task is to assess the quality of the conversation and the note.

Instructions:
- Context: The conversations and clinical notes are generated by a large language model. Your task is to assess the quality of these cases by focusing on whether the conversation and notes represent real-world scenarios accurately.
- Conversation Assessment: Evaluate if the conversations are realistic and mimic true clinical interactions during outpatient visits. Be alert for unrealistic conversations, such as interactions involving a newborn speaking or inappropriate dialogue with the mother of a newborn. Identify low-quality conversations that lack sufficient detail or context.
- Clinical Note Assessment: Assess the quality of the clinical note. Identify notes that may contain inaccuracies, hallucinations not supported by the conversation, or that are incoherent or below the standard expected of high-quality medical documentation.
- Recording Changes: Include only the following information in your output.
    - Have two root items of "Conversation_quality" and "Note_quality". For each, include the following items:
    - "Rational": Provide an explanation for your quality assessment.
    - "Quality": Choose among "High," "Medium," or "Low." This indicates your quality assessment.
    - "Confidence": Choose between "High," "Medium," or "Low." This indicates your confidence in the quality assessment.
- Output JSON format according to the specified structure. Do not include the original JSON data in your output.

Here is the conversation: {dialogue}

Here is the clinical note: {problems}"#;

pub const PREFERENCE_TEMPLATE: &str = r#"You are given a patient-doctor conversation and several clinical notes based on the conversation. The clinical notes only cover the "Assessment and Plan" section of the note. Your job is to select the best note and provide reasoning.

Here's the dialogue:
{dialogue}

Here are the notes:
Note 1:
{note_1}

Note 2:
{note_2}

Note 3:
{note_3}

Provide answers in JSON format with two fields: "Rationale" and "Preferred Note". Explain your reasoning in the "Rationale" field step-by-step. The "Preferred Note" should be the number of the note you select (1, 2, or 3). Make sure your output is in valid JSON format."#;

/// Instructions shown to readers in the preference study.
pub const REVIEWER_INSTRUCTIONS: &str = r#"1. In each row, you will be given a synthetic outpatient patient-provider dialogue, and two clinical notes based on the same dialogue. We will only evaluate the "Assessment and Plan" parts of a note.
2. We have performed randomization of the notes and simple processing to unify the format of notes.
3. The dialogues include conversations with (a) calls to a virtual assistant, (b) unconstrained directions or discussions with a scribe, and (c) natural conversations between a doctor and patient. Most conversations occurred in the outpatient setting.
4. Since we are focusing solely on the "Assessment and Plan," you may assume that all other pertinent information from the dialogue has been documented elsewhere in the note, which is not shown here. Please evaluate the "Assessment and Plan" as you would in a real note. For example, relevant physical exam findings may be helpful in the "Assessment and Plan."
5. For each row, please start by reading the dialogue and then select your preferred notes. Make your selection based on the overall quality of the note. Essentially, choose the note you would prefer to use in a real patient encounter, imagining you are adopting AI-generated clinical notes for your daily clinical work. You may consider aspects including but not limited to:
   (a) Accuracy: Does the information in the clinical note accurately reflect the details from the dialogue?
   (b) Completeness: How well does the note cover the important information from the dialogue?
   (c) Helpfulness: Does this note include useful information that you would expect from a real "Assessment and Plan"?
   However, remember that, ultimately, the selection should reflect your personal preference as a physician.
6. It's perfectly acceptable to select a tie if you feel that two notes are equally good (or equally poor).
7. Please enter brief comments about each note to help us understand the rationale behind your selection. This is appreciated but not mandatory."#;

pub fn error_type_instruction(error_type: ErrorType) -> &'static str {
    match error_type {
        ErrorType::FactualInaccuracy => FACTUAL_INACCURACY_INSTRUCTION,
        ErrorType::Hallucination => HALLUCINATION_INSTRUCTION,
        ErrorType::Unhelpfulness => UNHELPFULNESS_INSTRUCTION,
    }
}

/// Substitutes `{key}` placeholders. Unknown placeholders are left intact.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

pub fn error_prompt(error_type: ErrorType, dialogue: &str, problems_json: &str) -> String {
    fill(
        ERROR_TEMPLATE,
        &[
            ("error_type_instruction", error_type_instruction(error_type)),
            ("dialogue", dialogue),
            ("problems", problems_json),
        ],
    )
}

pub fn paraphrase_prompt(dialogue: &str, problems_json: &str) -> String {
    fill(PARAPHRASE_TEMPLATE, &[("dialogue", dialogue), ("problems", problems_json)])
}

pub fn quality_prompt(dialogue: &str, problems_json: &str) -> String {
    fill(QUALITY_TEMPLATE, &[("dialogue", dialogue), ("problems", problems_json)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_prompt_substitutes_everything() {
        let p = error_prompt(ErrorType::Hallucination, "DIALOGUE", "{\"Problems\":[]}");
        assert!(p.contains("Error type is \"Hallucination\""));
        assert!(p.contains("Here is the conversation: DIALOGUE"));
        assert!(p.ends_with("{\"Problems\":[]}"));
        assert!(!p.contains("{error_type_instruction}"));
        assert!(p.contains("Introduce 10 errors"));
    }

    #[test]
    fn paraphrase_prompt_asks_for_twenty() {
        let p = paraphrase_prompt("D", "N");
        assert!(p.contains("introduce 20 paraphrases"));
        assert!(p.contains("\"Paraphrases\""));
    }
}
