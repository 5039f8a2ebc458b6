//! Synthetic applications in the Home Credit `application_train` layout, plus
//! a matching bureau table. The default probability depends nonlinearly on
//! EXT_SOURCE_2 and EXT_SOURCE_3, weakly on a handful of other columns, and
//! not at all on the remaining ones.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::dataset::{load_csv_reader, Dataset, RawTable, SchemaConfig};
use crate::error::Result;
use crate::models::sigmoid;

pub const FIRST_ID: i64 = 100_001;
pub const RETIRED_SENTINEL: i64 = 365_243;

#[derive(Debug, Clone)]
pub struct SyntheticTables {
    pub application: Vec<u8>,
    pub bureau: Vec<u8>,
}

impl SyntheticTables {
    pub fn application_dataset(&self) -> Result<Dataset> {
        load_csv_reader(self.application.as_slice(), &SchemaConfig::default())
    }

    pub fn bureau_table(&self) -> Result<RawTable> {
        RawTable::from_reader("bureau", self.bureau.as_slice())
    }
}

const APPLICATION_HEADER: [&str; 28] = [
    "SK_ID_CURR",
    "TARGET",
    "NAME_CONTRACT_TYPE",
    "CODE_GENDER",
    "FLAG_OWN_CAR",
    "FLAG_OWN_REALTY",
    "CNT_CHILDREN",
    "AMT_INCOME_TOTAL",
    "AMT_CREDIT",
    "AMT_ANNUITY",
    "AMT_GOODS_PRICE",
    "NAME_EDUCATION_TYPE",
    "NAME_FAMILY_STATUS",
    "REGION_POPULATION_RELATIVE",
    "DAYS_BIRTH",
    "DAYS_EMPLOYED",
    "DAYS_REGISTRATION",
    "DAYS_ID_PUBLISH",
    "OWN_CAR_AGE",
    "HOUR_APPR_PROCESS_START",
    "EXT_SOURCE_1",
    "EXT_SOURCE_2",
    "EXT_SOURCE_3",
    "DAYS_LAST_PHONE_CHANGE",
    "APARTMENTS_AVG",
    "BASEMENTAREA_AVG",
    "YEARS_BEGINEXPLUATATION_AVG",
    "LIVINGAREA_AVG",
];

const EDUCATION: [&str; 5] = [
    "Secondary / secondary special",
    "Higher education",
    "Incomplete higher",
    "Lower secondary",
    "Academic degree",
];
const EDUCATION_P: [f64; 5] = [0.71, 0.24, 0.033, 0.015, 0.002];
const EDUCATION_RISK: [f64; 5] = [0.15, -0.25, 0.05, 0.35, -0.4];

const FAMILY: [&str; 5] = ["Married", "Single / not married", "Civil marriage", "Separated", "Widow"];
const FAMILY_P: [f64; 5] = [0.64, 0.15, 0.1, 0.06, 0.05];

fn pick<R: Rng>(r: &mut R, p: &[f64]) -> usize {
    let u: f64 = r.gen();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

fn opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(String::new, |x| format!("{x:.decimals$}"))
}

/// Shape of the planted EXT_SOURCE effect on the log-odds. A step down
/// at low scores, a smaller step up at high ones, and an interaction.
fn ext_effect(e2: f64, e3: f64) -> f64 {
    let band = |e: f64| if e < 0.3 { 1.8 } else if e > 0.65 { -1.0 } else { 0.0 };
    band(e2) + band(e3) + 12.0 * (e2 - 0.5) * (e3 - 0.5)
}

/// `n` applications and their bureau records, fully determined by `seed`.
pub fn generate(n: usize, seed: u64) -> Result<SyntheticTables> {
    let mut r = crate::rng::stream(seed, "synth-application", 0);
    let mut rb = crate::rng::stream(seed, "synth-bureau", 0);
    let income = LogNormal::new(11.9, 0.5).expect("valid lognormal");
    let credit_ratio = LogNormal::new(1.0, 0.45).expect("valid lognormal");
    let noise = Normal::new(0.0, 1.0).expect("valid normal");

    let mut app = csv::Writer::from_writer(Vec::new());
    app.write_record(APPLICATION_HEADER).map_err(csv_err)?;
    let mut bureau = csv::Writer::from_writer(Vec::new());
    bureau
        .write_record(["SK_ID_BUREAU", "SK_ID_CURR", "CREDIT_ACTIVE", "DAYS_CREDIT", "AMT_CREDIT_SUM", "CREDIT_DAY_OVERDUE"])
        .map_err(csv_err)?;
    let mut bureau_id = 5_000_000i64;

    for i in 0..n {
        let id = FIRST_ID + i as i64;
        let revolving = r.gen_bool(0.095);
        let male = r.gen_bool(0.34);
        let own_car = r.gen_bool(0.34);
        let own_realty = r.gen_bool(0.69);
        let children = pick(&mut r, &[0.7, 0.2, 0.087, 0.012, 0.001]);
        let inc: f64 = income.sample(&mut r);
        let credit = (inc * credit_ratio.sample(&mut r)).max(45_000.0);
        let annuity = credit * r.gen_range(0.03..0.09);
        let goods = credit * r.gen_range(0.8..1.0);
        let edu = pick(&mut r, &EDUCATION_P);
        let fam = pick(&mut r, &FAMILY_P);
        let region = r.gen_range(0.0003..0.072);
        let age_days: f64 = r.gen_range(7_500.0..25_200.0);
        let retired = age_days > 20_000.0 && r.gen_bool(0.75) || r.gen_bool(0.03);
        let employed_days = if retired { None } else { Some(r.gen_range(30.0..(age_days - 6_500.0).max(60.0)).floor()) };
        let registration = r.gen_range(0.0..age_days.min(24_000.0));
        let id_publish: f64 = r.gen_range(0.0..7_200.0);
        let car_age = if own_car { Some(r.gen_range(0.0..30.0f64).floor()) } else { None };
        let hour = r.gen_range(4..22);
        let phone = r.gen_range(0.0..4_300.0f64).floor();
        // housing block: often missing, unrelated to the outcome
        let housing_known = r.gen_bool(0.5);
        let housing: [f64; 4] = std::array::from_fn(|_| r.gen_range(0.0..1.0));

        // latent scores, correlated with age and education
        let age_n = (age_days - 16_000.0) / 5_000.0;
        let clamp = |v: f64| v.clamp(0.0005, 0.999);
        let e1 = clamp(0.5 + 0.12 * age_n + 0.2 * noise.sample(&mut r));
        let e2 = clamp(0.52 + 0.06 * age_n - 0.3 * EDUCATION_RISK[edu] + 0.19 * noise.sample(&mut r));
        let e3 = clamp(0.5 + 0.08 * age_n + 0.2 * noise.sample(&mut r));
        let e1_obs = r.gen_bool(0.45).then_some(e1);
        let e2_obs = (!r.gen_bool(0.002)).then_some(e2);
        let e3_obs = (!r.gen_bool(0.12)).then_some(e3);

        let n_bureau = pick(&mut r, &[0.15, 0.25, 0.25, 0.15, 0.1, 0.1]);
        let mut overdue_any = false;
        for _ in 0..n_bureau {
            bureau_id += 1;
            let active = rb.gen_bool(0.37);
            let overdue = if rb.gen_bool(0.04) { rb.gen_range(1..120) } else { 0 };
            overdue_any |= overdue > 0;
            bureau
                .write_record([
                    bureau_id.to_string(),
                    id.to_string(),
                    if active { "Active" } else { "Closed" }.to_string(),
                    format!("-{}", rb.gen_range(1..2_900)),
                    format!("{:.1}", rb.gen_range(10_000.0..600_000.0)),
                    overdue.to_string(),
                ])
                .map_err(csv_err)?;
        }

        let z = -2.0
            + ext_effect(e2, e3)
            + 0.5 * ((0.35 - e1).max(0.0) / 0.35)
            + 0.3 * f64::from(u8::from(male))
            + EDUCATION_RISK[edu]
            + 0.5 * (age_n * age_n - 0.6)
            + (((credit / annuity) - 22.0) / 6.0).powi(2).min(2.5) * 0.6
            - 0.15 * f64::from(u8::from(retired))
            + 0.4 * f64::from(u8::from((annuity / inc) > 0.3))
            + 0.3 * f64::from(u8::from(overdue_any));
        let target = u8::from(r.gen_bool(sigmoid(z)));

        app.write_record([
            id.to_string(),
            target.to_string(),
            if revolving { "Revolving loans" } else { "Cash loans" }.to_string(),
            if male { "M" } else { "F" }.to_string(),
            if own_car { "Y" } else { "N" }.to_string(),
            if own_realty { "Y" } else { "N" }.to_string(),
            children.to_string(),
            format!("{inc:.1}"),
            format!("{credit:.1}"),
            format!("{annuity:.1}"),
            format!("{goods:.1}"),
            EDUCATION[edu].to_string(),
            FAMILY[fam].to_string(),
            format!("{region:.6}"),
            format!("-{}", age_days.floor()),
            employed_days.map_or_else(|| RETIRED_SENTINEL.to_string(), |d: f64| format!("-{d}")),
            format!("-{:.1}", registration),
            format!("-{}", id_publish.floor()),
            opt(car_age, 1),
            hour.to_string(),
            opt(e1_obs, 6),
            opt(e2_obs, 6),
            opt(e3_obs, 6),
            format!("-{phone:.1}"),
            opt(housing_known.then_some(housing[0]), 4),
            opt(housing_known.then_some(housing[1]), 4),
            opt(housing_known.then_some(0.95 + 0.05 * housing[2]), 4),
            opt(housing_known.then_some(housing[3]), 4),
        ])
        .map_err(csv_err)?;
    }
    Ok(SyntheticTables { application: into_bytes(app)?, bureau: into_bytes(bureau)? })
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Io(e.into())
}

fn into_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| crate::error::Error::Io(e.into_error()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(200, 7).unwrap();
        let b = generate(200, 7).unwrap();
        assert_eq!(a.application, b.application);
        assert_eq!(a.bureau, b.bureau);
        assert_ne!(a.application, generate(200, 8).unwrap().application);
    }

    #[test]
    fn loads_with_default_schema() {
        let t = generate(500, 1).unwrap();
        let d = t.application_dataset().unwrap();
        assert_eq!(d.n_rows(), 500);
        assert_eq!(d.row_ids()[0], FIRST_ID);
        let (neg, pos) = d.class_counts();
        assert!(pos > 50 && neg > pos, "{neg}/{pos}");
        // the sentinel is read as missing
        let j = d.column_index("DAYS_EMPLOYED").unwrap();
        assert!(d.values().column(j).iter().any(|v| v.is_nan()));
        assert!(t.bureau_table().unwrap().rows.len() > 500);
    }
}
