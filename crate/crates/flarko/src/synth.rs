//! Seeded synthetic dataset in the FAR-Trans column layout.

use std::io;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Days, NaiveDate, Weekday};
use flarko_core::eval::EvalWindow;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{DataConfig, RunConfig, SelectorConfig};
use crate::load::{AssetColumns, PriceColumns, TransactionColumns};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthOptions {
    pub seed: u64,
    pub users: usize,
    pub assets: usize,
    pub window: EvalWindow,
    /// Days of data before the first recommendation date.
    pub history_days: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            users: 5,
            assets: 12,
            window: EvalWindow::new(
                NaiveDate::from_ymd_opt(2021, 12, 1).unwrap(),
                NaiveDate::from_ymd_opt(2022, 11, 29).unwrap(),
            ),
            history_days: 540,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFiles {
    pub transactions: PathBuf,
    pub prices: PathBuf,
    pub assets: PathBuf,
    pub config: PathBuf,
    pub transaction_rows: usize,
    pub price_rows: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Check digit for an 11-character ISIN prefix (letters count as 10..35).
pub fn isin_check_digit(prefix: &str) -> u32 {
    let digits: String = prefix
        .chars()
        .map(|c| c.to_digit(36).expect("alphanumeric ISIN prefix").to_string())
        .collect();
    let sum: u32 = digits
        .chars()
        .rev()
        .enumerate()
        .map(|(i, c)| {
            let d = c.to_digit(10).unwrap();
            if i % 2 == 0 {
                let x = d * 2;
                x / 10 + x % 10
            } else {
                d
            }
        })
        .sum();
    (10 - sum % 10) % 10
}

const COUNTRIES: [&str; 4] = ["GR", "US", "DE", "IE"];
const SECTORS: [(&str, &str); 6] = [
    ("Industrials", "Airlines"),
    ("Financials", "Banks"),
    ("Energy", "Oil & Gas"),
    ("Technology", "Software"),
    ("Utilities", "Electric Utilities"),
    ("Consumer Staples", "Food Products"),
];

struct Asset {
    isin: String,
    category: &'static str,
    sector: &'static str,
    industry: &'static str,
    drift: f64,
    vol: f64,
    start: f64,
}

fn make_assets(rng: &mut ChaCha8Rng, n: usize) -> Vec<Asset> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let cc = COUNTRIES[rng.gen_range(0..COUNTRIES.len())];
        let body: String = (0..9)
            .map(|_| {
                let v = rng.gen_range(0..36u32);
                char::from_digit(v, 36).unwrap().to_ascii_uppercase()
            })
            .collect();
        let prefix = format!("{cc}{body}");
        let isin = format!("{prefix}{}", isin_check_digit(&prefix));
        if !seen.insert(isin.clone()) {
            continue;
        }
        let (sector, industry) = SECTORS[rng.gen_range(0..SECTORS.len())];
        let category = if rng.gen_bool(0.75) { "Stock" } else { "Bond" };
        out.push(Asset {
            isin,
            category,
            sector,
            industry,
            drift: rng.gen_range(-0.0008..0.0012),
            vol: if category == "Bond" { rng.gen_range(0.002..0.006) } else { rng.gen_range(0.008..0.025) },
            start: rng.gen_range(2.0..80.0),
        });
    }
    out
}

fn trading_days(from: NaiveDate, to: NaiveDate) -> impl Iterator<Item = NaiveDate> {
    from.iter_days()
        .take_while(move |d| *d <= to)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
}

/// Writes `transactions.csv`, `prices.csv`, `assets.csv` and a sample
/// `config.json` into `dir`.
pub fn generate(dir: &Path, opts: &SynthOptions) -> Result<SynthFiles, SynthError> {
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let first = opts.window.start - Days::new(opts.history_days);
    let last = opts.window.end + Days::new(u64::from(opts.window.horizon_days) + 7);
    let assets = make_assets(&mut rng, opts.assets.max(1));

    let acols = AssetColumns::default();
    let assets_path = dir.join("assets.csv");
    let mut w = csv::Writer::from_path(&assets_path)?;
    w.write_record(["ISIN", "assetName", "assetShortName", &acols.category, "assetSubCategory", "marketID", &acols.sector, &acols.industry, "timestamp"])?;
    for (i, a) in assets.iter().enumerate() {
        let name = format!("Synthetic {} {}", a.industry, i + 1);
        w.write_record([a.isin.as_str(), &name, &format!("SYN{}", i + 1), a.category, a.category, "XATH", a.sector, a.industry, &first.to_string()])?;
    }
    w.flush()?;

    let pcols = PriceColumns::default();
    let prices_path = dir.join("prices.csv");
    let mut w = csv::Writer::from_path(&prices_path)?;
    w.write_record([&pcols.isin, &pcols.date, &pcols.close])?;
    let mut price_rows = 0;
    for a in &assets {
        let mut close = a.start;
        for day in trading_days(first, last) {
            // uniform shocks scaled to the target volatility
            let shock: f64 = rng.gen_range(-1.0..1.0) * a.vol * 1.732;
            close = (close * (1.0 + a.drift + shock)).max(0.05);
            w.write_record([a.isin.as_str(), &day.to_string(), &format!("{close:.4}")])?;
            price_rows += 1;
        }
    }
    w.flush()?;

    let tcols = TransactionColumns::default();
    let tx_path = dir.join("transactions.csv");
    let mut w = csv::Writer::from_path(&tx_path)?;
    w.write_record([&tcols.user_id, &tcols.isin, "transactionID", &tcols.txn_type, &tcols.timestamp, &tcols.value, "units", "channel", "marketID"])?;
    let mut tx_rows = 0;
    for _ in 0..opts.users.max(1) {
        let user: String = (0..20)
            .map(|_| char::from_digit(rng.gen_range(0..16), 16).unwrap().to_ascii_uppercase())
            .collect();
        let mut favourites: Vec<&Asset> = assets.iter().collect();
        favourites.shuffle(&mut rng);
        favourites.truncate(3.min(assets.len()));
        let activity = rng.gen_range(0.04..0.12);
        for day in trading_days(first, last) {
            if !rng.gen_bool(activity) {
                continue;
            }
            let a = if rng.gen_bool(0.75) {
                favourites[rng.gen_range(0..favourites.len())]
            } else {
                &assets[rng.gen_range(0..assets.len())]
            };
            let kind = if rng.gen_bool(0.7) { "Buy" } else { "Sell" };
            let value = rng.gen_range(100_00..2_000_000) as f64 / 100.0;
            let units = rng.gen_range(1..500);
            tx_rows += 1;
            w.write_record([
                user.as_str(),
                &a.isin,
                &format!("T{tx_rows:07}"),
                kind,
                &format!("{day} 10:00:00"),
                &format!("{value:.2}"),
                &units.to_string(),
                "online",
                "XATH",
            ])?;
        }
    }
    w.flush()?;

    let config = RunConfig {
        data: DataConfig {
            transactions: "transactions.csv".into(),
            prices: "prices.csv".into(),
            assets: "assets.csv".into(),
            transaction_columns: tcols,
            price_columns: pcols,
            asset_columns: acols,
        },
        namespace: flarko_core::kg::DEFAULT_NAMESPACE.into(),
        eval_window: opts.window,
        users: None,
        variants: flarko_core::pipeline::PipelineVariant::ALL.to_vec(),
        selector: SelectorConfig::default(),
        generator: Default::default(),
        generation: Default::default(),
        budget: Default::default(),
        seed: opts.seed,
        output_dir: "run".into(),
        workers: None,
        request: crate::config::DEFAULT_REQUEST.into(),
        format_instruction: flarko_core::pipeline::DEFAULT_FORMAT_INSTRUCTION.into(),
        complete_assets: true,
        hit_mode: Default::default(),
        active_only: false,
    };
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config)? + "\n")?;

    Ok(SynthFiles {
        transactions: tx_path,
        prices: prices_path,
        assets: assets_path,
        config: config_path,
        transaction_rows: tx_rows,
        price_rows,
    })
}
