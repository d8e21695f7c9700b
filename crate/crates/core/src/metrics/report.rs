use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    art, bleu, extract_params_in, ipa, mean, per, std_dev, ter, token_f1, tokenize, tsr, vematch,
    InteractionRecord, IpaParams, MetricsError, SemanticScorer, TranslationRecord,
};
use crate::langid::language_info;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub lang: String,
    pub family: String,
    pub n: usize,
    pub ipa: f64,
    pub tsr: f64,
    pub art_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallRow {
    pub n: usize,
    pub ipa: f64,
    pub tsr: f64,
    pub art_s: f64,
    /// Spread of the per-language values.
    pub ipa_std: f64,
    pub tsr_std: f64,
    pub art_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<ReportRow>,
    pub overall: OverallRow,
    /// Records the semantic scorer could not score.
    pub excluded: usize,
}

fn family_of(lang: &str) -> String {
    language_info(lang).map_or_else(|| "Unknown".to_string(), |i| i.family.to_string())
}

/// Per-language and overall IPA, TSR and ART. Rows are sorted by language
/// code, so the output depends only on the set of records.
pub fn build_report(
    records: &[InteractionRecord],
    scorer: &dyn SemanticScorer,
    params: &IpaParams,
) -> Result<MetricsReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let mut by_lang: BTreeMap<&str, Vec<InteractionRecord>> = BTreeMap::new();
    for r in records {
        by_lang.entry(r.lang.as_str()).or_default().push(r.clone());
    }
    let mut rows = Vec::new();
    let mut excluded = 0;
    for (lang, recs) in &by_lang {
        let out = ipa(recs, scorer, params)?;
        excluded += out.excluded;
        rows.push(ReportRow {
            lang: lang.to_string(),
            family: family_of(lang),
            n: recs.len(),
            ipa: out.ipa,
            tsr: tsr(recs)?,
            art_s: art(recs)?,
        });
    }
    let col = |f: fn(&ReportRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let overall = OverallRow {
        n: records.len(),
        ipa: ipa(records, scorer, params)?.ipa,
        tsr: tsr(records)?,
        art_s: art(records)?,
        ipa_std: std_dev(&col(|r| r.ipa)),
        tsr_std: std_dev(&col(|r| r.tsr)),
        art_std: std_dev(&col(|r| r.art_s)),
    };
    Ok(MetricsReport {
        rows,
        overall,
        excluded,
    })
}

fn csv_err(e: impl std::fmt::Display) -> MetricsError {
    MetricsError::Io(e.to_string())
}

impl MetricsReport {
    /// `lang,family,n,ipa,tsr,art_s` with an `ALL` row last. Numbers use six
    /// decimals so equal reports give byte-equal files.
    pub fn to_csv(&self) -> Result<String, MetricsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["lang", "family", "n", "ipa", "tsr", "art_s"])
            .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.lang.clone(),
                r.family.clone(),
                r.n.to_string(),
                format!("{:.6}", r.ipa),
                format!("{:.6}", r.tsr),
                format!("{:.6}", r.art_s),
            ])
            .map_err(csv_err)?;
        }
        let o = &self.overall;
        w.write_record([
            "ALL".to_string(),
            "-".to_string(),
            o.n.to_string(),
            format!("{:.6}", o.ipa),
            format!("{:.6}", o.tsr),
            format!("{:.6}", o.art_s),
        ])
        .map_err(csv_err)?;
        let bytes = w.into_inner().map_err(csv_err)?;
        String::from_utf8(bytes).map_err(csv_err)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Lexical, semantic and parameter scores of one translation pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationScores {
    pub lang: String,
    pub source: String,
    pub bleu: f64,
    pub ter: f64,
    pub per: f64,
    pub vematch: u8,
    /// Token-overlap F1, standing in for an embedding-based score.
    pub f_token: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationSummary {
    pub lang: String,
    pub n: usize,
    pub bleu: f64,
    pub ter: f64,
    pub per: f64,
    pub vematch: f64,
    pub f_token: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationQcReport {
    pub records: Vec<TranslationScores>,
    pub languages: Vec<TranslationSummary>,
}

/// Score every translation pair and average per language.
pub fn translation_qc(records: &[TranslationRecord]) -> Result<TranslationQcReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let mut scored = Vec::with_capacity(records.len());
    for r in records {
        let rt = tokenize(&r.reference, &r.lang);
        let ht = tokenize(&r.hyp, &r.lang);
        let lower = |t: &[String]| t.iter().map(|s| s.to_lowercase()).collect::<Vec<_>>();
        scored.push(TranslationScores {
            lang: r.lang.clone(),
            source: r.source.clone(),
            bleu: bleu(&rt, &ht)?,
            ter: ter(&rt, &ht)?,
            per: per(
                &extract_params_in(&r.reference, &r.lang),
                &extract_params_in(&r.hyp, &r.lang),
            ),
            vematch: vematch(&rt, &ht)?,
            f_token: token_f1(&lower(&rt), &lower(&ht)),
        });
    }
    let mut by_lang: BTreeMap<&str, Vec<&TranslationScores>> = BTreeMap::new();
    for s in &scored {
        by_lang.entry(s.lang.as_str()).or_default().push(s);
    }
    let mut languages = Vec::new();
    for (lang, xs) in by_lang {
        let avg = |f: fn(&TranslationScores) -> f64| {
            mean(&xs.iter().map(|s| f(s)).collect::<Vec<_>>())
        };
        languages.push(TranslationSummary {
            lang: lang.to_string(),
            n: xs.len(),
            bleu: avg(|s| s.bleu)?,
            ter: avg(|s| s.ter)?,
            per: avg(|s| s.per)?,
            vematch: avg(|s| f64::from(s.vematch))?,
            f_token: avg(|s| s.f_token)?,
        });
    }
    Ok(TranslationQcReport {
        records: scored,
        languages,
    })
}

impl TranslationQcReport {
    /// Per-language means as CSV.
    pub fn summary_csv(&self) -> Result<String, MetricsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["lang", "n", "bleu", "ter", "per", "vematch", "f_token"])
            .map_err(csv_err)?;
        for s in &self.languages {
            w.write_record([
                s.lang.clone(),
                s.n.to_string(),
                format!("{:.6}", s.bleu),
                format!("{:.6}", s.ter),
                format!("{:.6}", s.per),
                format!("{:.6}", s.vematch),
                format!("{:.6}", s.f_token),
            ])
            .map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
    }

    /// One row per pair: the raw metric matrix.
    pub fn records_csv(&self) -> Result<String, MetricsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["lang", "source", "bleu", "ter", "per", "vematch", "f_token"])
            .map_err(csv_err)?;
        for s in &self.records {
            w.write_record([
                s.lang.clone(),
                s.source.clone(),
                format!("{:.6}", s.bleu),
                format!("{:.6}", s.ter),
                format!("{:.6}", s.per),
                s.vematch.to_string(),
                format!("{:.6}", s.f_token),
            ])
            .map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
    }
}

#[cfg(test)]
mod tests {
    use super::super::TokenF1Scorer;
    use super::*;

    fn rec(lang: &str, ok: bool, gap: u64) -> InteractionRecord {
        InteractionRecord {
            lang: lang.into(),
            text: "t".into(),
            t_ins_ms: 0,
            t_res_ms: gap,
            gold_actions: vec!["Wait 1 s.".into()],
            pred_actions: vec!["Wait 1 s.".into()],
            success: ok,
        }
    }

    #[test]
    fn report_rows_and_csv() {
        let recs = [rec("fr", true, 2000), rec("de", false, 1000), rec("fr", false, 3000)];
        let r = build_report(&recs, &TokenF1Scorer, &IpaParams::default()).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.rows[0].lang, "de");
        assert_eq!(r.rows[1].tsr, 0.5);
        assert_eq!(r.rows[1].art_s, 2.5);
        assert_eq!(r.overall.n, 3);
        let csv = r.to_csv().unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "lang,family,n,ipa,tsr,art_s"
        );
        assert!(csv.contains("fr,Indo-European,2,1.000000,0.500000,2.500000"));
        assert!(csv.trim_end().ends_with("ALL,-,3,1.000000,0.333333,2.000000"));
        let shuffled = [recs[2].clone(), recs[0].clone(), recs[1].clone()];
        let r2 = build_report(&shuffled, &TokenF1Scorer, &IpaParams::default()).unwrap();
        assert_eq!(r2.to_csv().unwrap(), csv);
    }

    #[test]
    fn qc_scores() {
        let recs = [TranslationRecord {
            source: "Move forward 2 m".into(),
            lang: "de".into(),
            hyp: "Fahre 2,5 m vorwärts".into(),
            reference: "Fahre 2,5 m vorwärts".into(),
        }];
        let q = translation_qc(&recs).unwrap();
        let s = &q.records[0];
        assert_eq!((s.bleu, s.ter, s.per, s.vematch, s.f_token), (1.0, 0.0, 0.0, 1, 1.0));
        assert!(q.summary_csv().unwrap().contains("de,1,1.000000"));
    }
}
