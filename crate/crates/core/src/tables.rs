//! Checked-in standard tables, parsed once from the files under `data/`.

use std::collections::HashMap;
use std::sync::LazyLock;

const NRB_CSV: &str = include_str!("../data/ts38104_nrb.csv");
const PROC_CSV: &str = include_str!("../data/ts38214_proc.csv");
const MCS2_CSV: &str = include_str!("../data/mcs_table2.csv");
const MCS3_CSV: &str = include_str!("../data/mcs_table3.csv");
const CQI2_CSV: &str = include_str!("../data/cqi_table2.csv");
const CQI3_CSV: &str = include_str!("../data/cqi_table3.csv");
const TBS_CSV: &str = include_str!("../data/tbs_table.csv");

/// One row of an MCS or CQI table as printed in TS 38.214.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateRow {
    pub index: u8,
    pub modulation_order: u8,
    pub code_rate_x1024: f64,
    pub spectral_efficiency: f64,
}

fn rows(text: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(text.as_bytes())
        .records()
        .map(|r| r.expect("embedded table is well-formed"))
        .collect()
}

fn key_values(text: &str) -> HashMap<String, f64> {
    rows(text)
        .iter()
        .map(|r| (r[0].to_string(), r[1].parse().expect("numeric table value")))
        .collect()
}

fn rate_rows(text: &str) -> Vec<RateRow> {
    rows(text)
        .iter()
        .map(|r| RateRow {
            index: r[0].parse().expect("index"),
            modulation_order: r[1].parse().expect("Qm"),
            code_rate_x1024: r[2].parse().expect("rate"),
            spectral_efficiency: r[3].parse().expect("efficiency"),
        })
        .collect()
}

pub static NRB: LazyLock<HashMap<String, f64>> = LazyLock::new(|| key_values(NRB_CSV));
pub static PROC: LazyLock<HashMap<String, f64>> = LazyLock::new(|| key_values(PROC_CSV));
pub static MCS_TABLE2: LazyLock<Vec<RateRow>> = LazyLock::new(|| rate_rows(MCS2_CSV));
pub static MCS_TABLE3: LazyLock<Vec<RateRow>> = LazyLock::new(|| rate_rows(MCS3_CSV));
pub static CQI_TABLE2: LazyLock<Vec<RateRow>> = LazyLock::new(|| rate_rows(CQI2_CSV));
pub static CQI_TABLE3: LazyLock<Vec<RateRow>> = LazyLock::new(|| rate_rows(CQI3_CSV));
pub static TBS_TABLE: LazyLock<Vec<u32>> =
    LazyLock::new(|| rows(TBS_CSV).iter().map(|r| r[1].parse().expect("tbs")).collect());
