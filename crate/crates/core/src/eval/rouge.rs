//! ROUGE-1, ROUGE-L and summary-level ROUGE-Lsum.
//!
//! Tokens are lowercased, punctuation is stripped and text is split on
//! whitespace. No stemming.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub fmeasure: f64,
}

impl RougeScore {
    fn from_hits(hits: usize, candidate: usize, reference: usize) -> Self {
        if hits == 0 || candidate == 0 || reference == 0 {
            return RougeScore::default();
        }
        let precision = hits as f64 / candidate as f64;
        let recall = hits as f64 / reference as f64;
        RougeScore {
            precision,
            recall,
            fmeasure: 2.0 * precision * recall / (precision + recall),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rouge {
    pub rouge1: RougeScore,
    #[serde(rename = "rougeL")]
    pub rouge_l: RougeScore,
    #[serde(rename = "rougeLsum")]
    pub rouge_lsum: RougeScore,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

pub fn rouge1(candidate: &[String], reference: &[String]) -> RougeScore {
    let c = counts(candidate);
    let hits = counts(reference)
        .iter()
        .map(|(t, n)| (*n).min(c.get(t).copied().unwrap_or(0)))
        .sum();
    RougeScore::from_hits(hits, candidate.len(), reference.len())
}

fn lcs_table(a: &[String], b: &[String]) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    lcs_table(a, b)[a.len()][b.len()]
}

/// Indices into `reference` of one longest common subsequence.
fn lcs_reference_indices(reference: &[String], candidate: &[String]) -> Vec<usize> {
    let t = lcs_table(reference, candidate);
    let (mut i, mut j) = (reference.len(), candidate.len());
    let mut out = Vec::new();
    while i > 0 && j > 0 {
        if reference[i - 1] == candidate[j - 1] {
            out.push(i - 1);
            i -= 1;
            j -= 1;
        } else if t[i - 1][j] >= t[i][j - 1] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    out.reverse();
    out
}

pub fn rouge_l(candidate: &[String], reference: &[String]) -> RougeScore {
    RougeScore::from_hits(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// Summary-level LCS: for each reference line, the union of its LCS hits
/// against every candidate line, with each token consumed at most as many
/// times as it occurs on both sides.
pub fn rouge_lsum(candidate_lines: &[Vec<String>], reference_lines: &[Vec<String>]) -> RougeScore {
    let cand_total: usize = candidate_lines.iter().map(Vec::len).sum();
    let ref_total: usize = reference_lines.iter().map(Vec::len).sum();
    let flat_c: Vec<String> = candidate_lines.concat();
    let flat_r: Vec<String> = reference_lines.concat();
    let mut c_left = counts(&flat_c);
    let mut r_left = counts(&flat_r);
    let mut hits = 0;
    for r in reference_lines {
        let mut union: Vec<usize> = candidate_lines
            .iter()
            .flat_map(|c| lcs_reference_indices(r, c))
            .collect();
        union.sort_unstable();
        union.dedup();
        for i in union {
            let tok = r[i].as_str();
            let (Some(rc), Some(cc)) = (r_left.get_mut(tok), c_left.get_mut(tok)) else {
                continue;
            };
            if *rc > 0 && *cc > 0 {
                hits += 1;
                *rc -= 1;
                *cc -= 1;
            }
        }
    }
    RougeScore::from_hits(hits, cand_total, ref_total)
}

pub fn rouge_scores(candidate: &str, reference: &str) -> Rouge {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    let lines = |t: &str| -> Vec<Vec<String>> {
        t.lines().map(tokenize).filter(|l| !l.is_empty()).collect()
    };
    Rouge {
        rouge1: rouge1(&c, &r),
        rouge_l: rouge_l(&c, &r),
        rouge_lsum: rouge_lsum(&lines(candidate), &lines(reference)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn identical_and_disjoint() {
        let r = rouge_scores("Left knee pain.\nOrder MRI.", "left knee pain\norder mri");
        for s in [r.rouge1, r.rouge_l, r.rouge_lsum] {
            assert_eq!(s.fmeasure, 1.0);
        }
        let r = rouge_scores("alpha beta", "gamma delta");
        for s in [r.rouge1, r.rouge_l, r.rouge_lsum] {
            assert_eq!(s, RougeScore::default());
        }
        assert_eq!(rouge_scores("", "a b").rouge1.fmeasure, 0.0);
    }

    #[test]
    fn hand_computed_values() {
        // LCS("a b c d", "a c b d") = 3.
        let s = rouge_l(&toks("a b c d"), &toks("a c b d"));
        assert!((s.fmeasure - 0.75).abs() < 1e-15);
        // Clipped unigram overlap: "the" appears twice in the candidate only once in the reference.
        let s = rouge1(&toks("the the cat"), &toks("the cat sat on"));
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.recall - 0.5).abs() < 1e-15);
    }

    #[test]
    fn summary_level_unions_across_lines() {
        // Reference line "a b c d" gets "a b" from one candidate line and "c d" from another.
        let c = vec![toks("a b x"), toks("y c d")];
        let r = vec![toks("a b c d")];
        let s = rouge_lsum(&c, &r);
        assert_eq!(s.recall, 1.0);
        assert!((s.precision - 4.0 / 6.0).abs() < 1e-15);
        // Plain LCS cannot reorder the two halves.
        assert_eq!(rouge_l(&toks("c d a b"), &toks("a b c d")).recall, 0.5);
    }

    #[test]
    fn swapping_arguments_swaps_precision_and_recall() {
        let (a, b) = (toks("one two three four"), toks("two four five"));
        for f in [rouge1, rouge_l] {
            let (x, y) = (f(&a, &b), f(&b, &a));
            assert_eq!(x.precision, y.recall);
            assert_eq!(x.recall, y.precision);
            assert!((x.fmeasure - y.fmeasure).abs() < 1e-15);
        }
    }
}
