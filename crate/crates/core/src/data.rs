//! Match records: CSV ingestion, synthetic league generation and chronological
//! train/test splitting.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::rng_from_seed;

/// Column order of the match CSV. The header row is required.
pub const MATCH_CSV_HEADER: [&str; 10] = [
    "match_id",
    "date",
    "season",
    "home_team",
    "away_team",
    "home_sets",
    "away_sets",
    "home_points",
    "away_points",
    "stage",
];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("invariant violated at line {line}: {reason}")]
    InvariantViolation { line: u64, reason: String },
    #[error("invalid league config: {0}")]
    InvalidConfig(String),
    #[error("degenerate split: {n} items with test fraction {fraction} leaves {n_train} train / {n_test} test")]
    DegenerateSplit {
        n: usize,
        fraction: f64,
        n_train: usize,
        n_test: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Competition stage of a match. Playoff stages raise the match importance feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    League,
    QuarterFinal,
    SemiFinal,
    Final,
}

impl Stage {
    pub const ALL: [Stage; 4] = [
        Stage::League,
        Stage::QuarterFinal,
        Stage::SemiFinal,
        Stage::Final,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::League => "League",
            Stage::QuarterFinal => "QuarterFinal",
            Stage::SemiFinal => "SemiFinal",
            Stage::Final => "Final",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|stage| stage.as_str() == s)
            .ok_or_else(|| {
                format!("unknown stage {s:?} (expected League, QuarterFinal, SemiFinal or Final)")
            })
    }
}

/// One played best-of-five match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawMatch {
    pub match_id: String,
    pub date: NaiveDate,
    pub season: String,
    pub home_team: String,
    pub away_team: String,
    pub home_sets: u8,
    pub away_sets: u8,
    pub home_points: u32,
    pub away_points: u32,
    pub stage: Stage,
}

impl RawMatch {
    pub fn home_won(&self) -> bool {
        self.home_sets == 3
    }

    /// Sets won minus sets lost, from the home team's side.
    pub fn home_set_diff(&self) -> f64 {
        f64::from(self.home_sets) - f64::from(self.away_sets)
    }

    /// Checks the record invariants, returning a description of the first violation.
    pub fn check(&self) -> Result<(), String> {
        if self.home_sets > 3 || self.away_sets > 3 {
            return Err(format!(
                "set scores must lie in 0..=3, got {}-{}",
                self.home_sets, self.away_sets
            ));
        }
        if (self.home_sets == 3) == (self.away_sets == 3) {
            return Err(format!(
                "exactly one side must win 3 sets, got {}-{}",
                self.home_sets, self.away_sets
            ));
        }
        if self.home_team == self.away_team {
            return Err(format!("team {:?} cannot play itself", self.home_team));
        }
        if self.home_points == 0 || self.away_points == 0 {
            return Err(format!(
                "point totals must be positive, got {}-{}",
                self.home_points, self.away_points
            ));
        }
        Ok(())
    }
}

/// Chronological order with ties broken by match id.
pub fn chronological_cmp(a: &RawMatch, b: &RawMatch) -> Ordering {
    a.date
        .cmp(&b.date)
        .then_with(|| a.match_id.cmp(&b.match_id))
}

pub fn sort_chronologically(matches: &mut [RawMatch]) {
    matches.sort_by(chronological_cmp);
}

/// Parse the match CSV at `path`. See [`read_matches_csv`].
pub fn parse_matches_csv(path: impl AsRef<Path>) -> Result<Vec<RawMatch>, DataError> {
    let file = std::fs::File::open(path)?;
    read_matches_csv(file)
}

/// Parse match records from any reader; the result is sorted chronologically.
pub fn read_matches_csv<R: Read>(reader: R) -> Result<Vec<RawMatch>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = rdr.headers()?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found != MATCH_CSV_HEADER {
        return Err(DataError::MalformedRow {
            line: 1,
            reason: format!(
                "header must be {:?}, found {:?}",
                MATCH_CSV_HEADER.join(","),
                found.join(",")
            ),
        });
    }

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            DataError::MalformedRow {
                line,
                reason: e.to_string(),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let m = parse_record(&record).map_err(|reason| DataError::MalformedRow { line, reason })?;
        m.check()
            .map_err(|reason| DataError::InvariantViolation { line, reason })?;
        out.push(m);
    }
    sort_chronologically(&mut out);
    Ok(out)
}

fn parse_record(record: &csv::StringRecord) -> Result<RawMatch, String> {
    if record.len() != MATCH_CSV_HEADER.len() {
        return Err(format!(
            "expected {} fields, found {}",
            MATCH_CSV_HEADER.len(),
            record.len()
        ));
    }
    fn field<T: FromStr>(record: &csv::StringRecord, idx: usize) -> Result<T, String>
    where
        T::Err: fmt::Display,
    {
        let raw = &record[idx];
        raw.parse::<T>()
            .map_err(|e| format!("{}: cannot parse {raw:?}: {e}", MATCH_CSV_HEADER[idx]))
    }
    fn text(record: &csv::StringRecord, idx: usize) -> Result<String, String> {
        let raw = &record[idx];
        if raw.is_empty() {
            Err(format!("{} is empty", MATCH_CSV_HEADER[idx]))
        } else {
            Ok(raw.to_string())
        }
    }

    let date = NaiveDate::parse_from_str(&record[1], "%Y-%m-%d")
        .map_err(|e| format!("date: cannot parse {:?}: {e}", &record[1]))?;
    Ok(RawMatch {
        match_id: text(record, 0)?,
        date,
        season: text(record, 2)?,
        home_team: text(record, 3)?,
        away_team: text(record, 4)?,
        home_sets: field(record, 5)?,
        away_sets: field(record, 6)?,
        home_points: field(record, 7)?,
        away_points: field(record, 8)?,
        stage: field(record, 9)?,
    })
}

/// Serialize matches in the CSV schema accepted by [`read_matches_csv`].
pub fn write_matches_csv<W: Write>(writer: W, matches: &[RawMatch]) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(MATCH_CSV_HEADER)?;
    for m in matches {
        wtr.write_record([
            m.match_id.as_str(),
            &m.date.format("%Y-%m-%d").to_string(),
            m.season.as_str(),
            m.home_team.as_str(),
            m.away_team.as_str(),
            &m.home_sets.to_string(),
            &m.away_sets.to_string(),
            &m.home_points.to_string(),
            &m.away_points.to_string(),
            m.stage.as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parameters of a synthetic league.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeagueConfig {
    pub n_teams: usize,
    pub n_seasons: usize,
    /// Added to the home side's latent strength (logit scale).
    pub home_advantage: f64,
    /// Standard deviation of the initial latent strengths.
    pub strength_spread: f64,
    /// Standard deviation of the per-season strength perturbation.
    pub drift: f64,
    pub seed: u64,
}

impl Default for LeagueConfig {
    fn default() -> Self {
        LeagueConfig {
            n_teams: 12,
            n_seasons: 3,
            home_advantage: 0.3,
            strength_spread: 1.0,
            drift: 0.3,
            seed: 7,
        }
    }
}

impl LeagueConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_teams < 4 {
            return Err(DataError::InvalidConfig(format!(
                "n_teams must be >= 4, got {}",
                self.n_teams
            )));
        }
        if self.n_seasons < 1 {
            return Err(DataError::InvalidConfig(format!(
                "n_seasons must be >= 1, got {}",
                self.n_seasons
            )));
        }
        if !self.home_advantage.is_finite() {
            return Err(DataError::InvalidConfig(
                "home_advantage must be finite".into(),
            ));
        }
        if !(self.strength_spread.is_finite() && self.strength_spread > 0.0) {
            return Err(DataError::InvalidConfig(format!(
                "strength_spread must be finite and > 0, got {}",
                self.strength_spread
            )));
        }
        if !(self.drift.is_finite() && self.drift >= 0.0) {
            return Err(DataError::InvalidConfig(format!(
                "drift must be finite and >= 0, got {}",
                self.drift
            )));
        }
        Ok(())
    }
}

const FIRST_SEASON_YEAR: i32 = 2010;

fn team_name(i: usize) -> String {
    format!("Team {:02}", i + 1)
}

fn season_tag(year: i32) -> String {
    format!("{}-{:02}", year, (year + 1).rem_euclid(100))
}

/// Double round-robin via the circle method. Returns rounds of (home, away) index pairs;
/// the second half repeats the first with venues swapped.
fn double_round_robin(n: usize) -> Vec<Vec<(usize, usize)>> {
    let bye = n % 2 == 1;
    let slots = if bye { n + 1 } else { n };
    let mut ring: Vec<usize> = (0..slots).collect();
    let mut first_leg = Vec::with_capacity(slots - 1);
    for round in 0..slots - 1 {
        let mut fixtures = Vec::with_capacity(slots / 2);
        for i in 0..slots / 2 {
            let a = ring[i];
            let b = ring[slots - 1 - i];
            if a >= n || b >= n {
                continue;
            }
            if (round + i) % 2 == 0 {
                fixtures.push((a, b));
            } else {
                fixtures.push((b, a));
            }
        }
        first_leg.push(fixtures);
        ring[1..].rotate_right(1);
    }
    let second_leg: Vec<Vec<(usize, usize)>> = first_leg
        .iter()
        .map(|r| r.iter().map(|&(h, a)| (a, h)).collect())
        .collect();
    first_leg.into_iter().chain(second_leg).collect()
}

#[derive(Debug, Clone, Copy, Default)]
struct TableRow {
    wins: u32,
    set_diff: i32,
}

/// League ladder order: wins, then set differential, then name.
pub(crate) fn ladder_cmp(a: (&str, u32, i32), b: (&str, u32, i32)) -> Ordering {
    b.1.cmp(&a.1)
        .then_with(|| b.2.cmp(&a.2))
        .then_with(|| a.0.cmp(b.0))
}

/// Sample one match as `(home_sets, away_sets, home_points, away_points)` given
/// `gap = home strength + home advantage - away strength`. The home side wins
/// with probability `sigmoid(gap)`.
pub fn sample_match<R: Rng>(rng: &mut R, gap: f64) -> (u8, u8, u32, u32) {
    let p_home = 1.0 / (1.0 + (-gap).exp());
    let home_wins = rng.random::<f64>() < p_home;
    let winner_gap = if home_wins { gap } else { -gap };

    // Loser's set count in {0,1,2}, tilted toward 0 as the winner's edge grows.
    let weights = [winner_gap.exp(), 1.0, (-winner_gap).exp()];
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut loser_sets = 2u8;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            loser_sets = k as u8;
            break;
        }
        u -= w;
    }

    let mut winner_points = 0u32;
    let mut loser_points = 0u32;
    for _ in 0..loser_sets {
        loser_points += 25;
        winner_points += rng.random_range(15..=23);
    }
    for _ in 0..2 {
        winner_points += 25;
        loser_points += rng.random_range(15..=23);
    }
    if loser_sets == 2 {
        winner_points += 15;
        loser_points += rng.random_range(5..=13);
    } else {
        winner_points += 25;
        loser_points += rng.random_range(15..=23);
    }

    if home_wins {
        (3, loser_sets, winner_points, loser_points)
    } else {
        (loser_sets, 3, loser_points, winner_points)
    }
}

struct MatchSampler<'a, R: Rng> {
    rng: &'a mut R,
    home_advantage: f64,
}

impl<R: Rng> MatchSampler<'_, R> {
    fn play(&mut self, home_strength: f64, away_strength: f64) -> (u8, u8, u32, u32) {
        sample_match(
            self.rng,
            home_strength + self.home_advantage - away_strength,
        )
    }
}

/// Generate a synthetic league: a double round-robin per season followed by
/// knockout playoffs among the top of the ladder (top 8, or top 4 for small
/// leagues). League rounds are a week apart and playoff rounds three days apart.
/// Output is sorted chronologically and fully determined by `config.seed`.
pub fn generate_synthetic_league(config: &LeagueConfig) -> Result<Vec<RawMatch>, DataError> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let n = config.n_teams;
    let initial = Normal::new(0.0, config.strength_spread)
        .map_err(|e| DataError::InvalidConfig(e.to_string()))?;
    let mut strengths: Vec<f64> = (0..n).map(|_| initial.sample(&mut rng)).collect();
    let drift = if config.drift > 0.0 {
        Some(Normal::new(0.0, config.drift).map_err(|e| DataError::InvalidConfig(e.to_string()))?)
    } else {
        None
    };
    let names: Vec<String> = (0..n).map(team_name).collect();
    let schedule = double_round_robin(n);

    let mut out = Vec::new();
    for season_idx in 0..config.n_seasons {
        if season_idx > 0 {
            if let Some(d) = &drift {
                for s in &mut strengths {
                    *s += d.sample(&mut rng);
                }
            }
        }
        let year = FIRST_SEASON_YEAR + season_idx as i32;
        let tag = season_tag(year);
        let start = first_saturday_of_october(year);
        let mut table = vec![TableRow::default(); n];
        let mut sampler = MatchSampler {
            rng: &mut rng,
            home_advantage: config.home_advantage,
        };

        let mut last_date = start;
        for (round, fixtures) in schedule.iter().enumerate() {
            let date = start + Duration::days(7 * round as i64);
            last_date = date;
            for (k, &(h, a)) in fixtures.iter().enumerate() {
                let (hs, as_, hp, ap) = sampler.play(strengths[h], strengths[a]);
                let diff = i32::from(hs) - i32::from(as_);
                if hs == 3 {
                    table[h].wins += 1;
                } else {
                    table[a].wins += 1;
                }
                table[h].set_diff += diff;
                table[a].set_diff -= diff;
                out.push(RawMatch {
                    match_id: format!("{tag}-L{:02}-{:02}", round + 1, k + 1),
                    date,
                    season: tag.clone(),
                    home_team: names[h].clone(),
                    away_team: names[a].clone(),
                    home_sets: hs,
                    away_sets: as_,
                    home_points: hp,
                    away_points: ap,
                    stage: Stage::League,
                });
            }
        }

        let mut ladder: Vec<usize> = (0..n).collect();
        ladder.sort_by(|&x, &y| {
            ladder_cmp(
                (&names[x], table[x].wins, table[x].set_diff),
                (&names[y], table[y].wins, table[y].set_diff),
            )
        });
        let seed_of: HashMap<usize, usize> = ladder
            .iter()
            .enumerate()
            .map(|(pos, &t)| (t, pos))
            .collect();

        let bracket_size = if n >= 8 { 8 } else { 4 };
        let mut alive: Vec<usize> = ladder[..bracket_size].to_vec();
        let mut date = last_date + Duration::days(7);
        let mut stage = if bracket_size == 8 {
            Stage::QuarterFinal
        } else {
            Stage::SemiFinal
        };
        loop {
            let pairs = alive.len() / 2;
            let mut winners = Vec::with_capacity(pairs);
            for k in 0..pairs {
                // Best remaining seed hosts the worst remaining seed.
                let (x, y) = (alive[k], alive[alive.len() - 1 - k]);
                let (h, a) = if seed_of[&x] < seed_of[&y] {
                    (x, y)
                } else {
                    (y, x)
                };
                let (hs, as_, hp, ap) = sampler.play(strengths[h], strengths[a]);
                winners.push(if hs == 3 { h } else { a });
                let id = match stage {
                    Stage::QuarterFinal => format!("{tag}-QF{}", k + 1),
                    Stage::SemiFinal => format!("{tag}-SF{}", k + 1),
                    _ => format!("{tag}-F"),
                };
                out.push(RawMatch {
                    match_id: id,
                    date,
                    season: tag.clone(),
                    home_team: names[h].clone(),
                    away_team: names[a].clone(),
                    home_sets: hs,
                    away_sets: as_,
                    home_points: hp,
                    away_points: ap,
                    stage,
                });
            }
            if winners.len() == 1 {
                break;
            }
            winners.sort_by_key(|t| seed_of[t]);
            alive = winners;
            date += Duration::days(3);
            stage = match stage {
                Stage::QuarterFinal => Stage::SemiFinal,
                _ => Stage::Final,
            };
        }
    }
    sort_chronologically(&mut out);
    Ok(out)
}

fn first_saturday_of_october(year: i32) -> NaiveDate {
    let oct1 = NaiveDate::from_ymd_opt(year, 10, 1).expect("valid date");
    let offset = (6 + 7 - oct1.weekday().num_days_from_monday() as i64 - 1) % 7;
    oct1 + Duration::days(offset)
}

/// Split chronologically ordered items: the final `ceil(n * test_fraction)` items
/// form the test set.
pub fn chronological_split<T: Clone>(
    items: &[T],
    test_fraction: f64,
) -> Result<(Vec<T>, Vec<T>), DataError> {
    let n = items.len();
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::DegenerateSplit {
            n,
            fraction: test_fraction,
            n_train: 0,
            n_test: 0,
        });
    }
    let n_test = ((n as f64) * test_fraction).ceil() as usize;
    let n_test = n_test.min(n);
    let n_train = n - n_test;
    if n_test == 0 || n_train == 0 {
        return Err(DataError::DegenerateSplit {
            n,
            fraction: test_fraction,
            n_train,
            n_test,
        });
    }
    Ok((items[..n_train].to_vec(), items[n_train..].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str =
        "match_id,date,season,home_team,away_team,home_sets,away_sets,home_points,away_points,stage\n";

    #[test]
    fn parses_canoas_row() {
        let csv = format!("{HEADER}m1,2014-12-05,2014-15,Canoas,America Volei,3,1,98,87,League\n");
        let matches = read_matches_csv(csv.as_bytes()).unwrap();
        assert_eq!(matches.len(), 1);
        let m = &matches[0];
        assert_eq!(m.stage, Stage::League);
        assert_eq!(m.home_team, "Canoas");
        assert_eq!(m.away_team, "America Volei");
        assert_eq!(m.date, NaiveDate::from_ymd_opt(2014, 12, 5).unwrap());
        assert_eq!(
            (m.home_sets, m.away_sets, m.home_points, m.away_points),
            (3, 1, 98, 87)
        );
        assert!(m.home_won());
    }

    #[test]
    fn header_only_is_empty() {
        assert!(read_matches_csv(HEADER.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn two_two_is_invariant_violation() {
        let csv = format!("{HEADER}m1,2014-12-05,2014-15,A,B,2,2,98,87,League\n");
        match read_matches_csv(csv.as_bytes()) {
            Err(DataError::InvariantViolation { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected InvariantViolation, got {other:?}"),
        }
        let csv = format!("{HEADER}m1,2014-12-05,2014-15,A,B,3,3,98,87,League\n");
        assert!(matches!(
            read_matches_csv(csv.as_bytes()),
            Err(DataError::InvariantViolation { .. })
        ));
    }

    #[test]
    fn malformed_rows_report_line() {
        let csv = format!(
            "{HEADER}m1,2014-12-05,2014-15,A,B,3,0,75,50,League\nm2,2014-13-05,2014-15,A,B,3,0,75,50,League\n"
        );
        match read_matches_csv(csv.as_bytes()) {
            Err(DataError::MalformedRow { line, reason }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("date"), "{reason}");
            }
            other => panic!("expected MalformedRow, got {other:?}"),
        }
        let csv = format!("{HEADER}m1,2014-12-05,2014-15,A,B,3,0,75,50,Playoff\n");
        assert!(matches!(
            read_matches_csv(csv.as_bytes()),
            Err(DataError::MalformedRow { line: 2, .. })
        ));
        assert!(matches!(
            read_matches_csv("id,date\n".as_bytes()),
            Err(DataError::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn self_match_and_zero_points_rejected() {
        let csv = format!("{HEADER}m1,2014-12-05,2014-15,A,A,3,0,75,50,League\n");
        assert!(matches!(
            read_matches_csv(csv.as_bytes()),
            Err(DataError::InvariantViolation { .. })
        ));
        let csv = format!("{HEADER}m1,2014-12-05,2014-15,A,B,3,0,75,0,League\n");
        assert!(matches!(
            read_matches_csv(csv.as_bytes()),
            Err(DataError::InvariantViolation { .. })
        ));
    }

    #[test]
    fn parse_sorts_by_date_then_id() {
        let csv = format!(
            "{HEADER}b,2014-12-05,s,A,B,3,0,75,50,League\na,2014-12-05,s,C,D,3,0,75,50,League\nz,2014-11-01,s,A,C,0,3,50,75,League\n"
        );
        let ids: Vec<String> = read_matches_csv(csv.as_bytes())
            .unwrap()
            .into_iter()
            .map(|m| m.match_id)
            .collect();
        assert_eq!(ids, ["z", "a", "b"]);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let cfg = LeagueConfig {
            n_teams: 10,
            n_seasons: 2,
            seed: 7,
            ..LeagueConfig::default()
        };
        let a = generate_synthetic_league(&cfg).unwrap();
        let b = generate_synthetic_league(&cfg).unwrap();
        assert_eq!(a, b);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_matches_csv(&mut buf_a, &a).unwrap();
        write_matches_csv(&mut buf_b, &b).unwrap();
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn double_round_robin_gives_eighteen_league_matches() {
        let cfg = LeagueConfig {
            n_teams: 10,
            n_seasons: 1,
            ..LeagueConfig::default()
        };
        let matches = generate_synthetic_league(&cfg).unwrap();
        let mut appearances: HashMap<&str, usize> = HashMap::new();
        let mut home: HashMap<&str, usize> = HashMap::new();
        for m in matches.iter().filter(|m| m.stage == Stage::League) {
            *appearances.entry(&m.home_team).or_default() += 1;
            *appearances.entry(&m.away_team).or_default() += 1;
            *home.entry(&m.home_team).or_default() += 1;
        }
        assert_eq!(appearances.len(), 10);
        assert!(appearances.values().all(|&c| c == 18));
        assert!(home.values().all(|&c| c == 9));
        let playoffs: Vec<Stage> = matches
            .iter()
            .filter(|m| m.stage != Stage::League)
            .map(|m| m.stage)
            .collect();
        assert_eq!(playoffs.len(), 7);
        assert_eq!(playoffs.iter().filter(|s| **s == Stage::Final).count(), 1);
    }

    #[test]
    fn odd_and_small_leagues() {
        for n in [4, 5, 7, 9] {
            let cfg = LeagueConfig {
                n_teams: n,
                n_seasons: 2,
                ..LeagueConfig::default()
            };
            let matches = generate_synthetic_league(&cfg).unwrap();
            let league = matches.iter().filter(|m| m.stage == Stage::League).count();
            assert_eq!(league, 2 * n * (n - 1), "n = {n}");
            for m in &matches {
                m.check().unwrap();
            }
            let finals = matches.iter().filter(|m| m.stage == Stage::Final).count();
            assert_eq!(finals, 2);
        }
    }

    #[test]
    fn every_pair_meets_home_and_away() {
        let matches = generate_synthetic_league(&LeagueConfig {
            n_teams: 6,
            n_seasons: 1,
            ..LeagueConfig::default()
        })
        .unwrap();
        let mut pairs: HashMap<(String, String), usize> = HashMap::new();
        for m in matches.iter().filter(|m| m.stage == Stage::League) {
            *pairs
                .entry((m.home_team.clone(), m.away_team.clone()))
                .or_default() += 1;
        }
        assert_eq!(pairs.len(), 30);
        assert!(pairs.values().all(|&c| c == 1));
    }

    #[test]
    fn dates_weekly_then_three_days() {
        let matches = generate_synthetic_league(&LeagueConfig {
            n_teams: 8,
            n_seasons: 1,
            ..LeagueConfig::default()
        })
        .unwrap();
        let last_league = matches
            .iter()
            .filter(|m| m.stage == Stage::League)
            .map(|m| m.date)
            .max()
            .unwrap();
        let qf = matches
            .iter()
            .find(|m| m.stage == Stage::QuarterFinal)
            .unwrap();
        let sf = matches
            .iter()
            .find(|m| m.stage == Stage::SemiFinal)
            .unwrap();
        let f = matches.iter().find(|m| m.stage == Stage::Final).unwrap();
        assert_eq!((qf.date - last_league).num_days(), 7);
        assert_eq!((sf.date - qf.date).num_days(), 3);
        assert_eq!((f.date - sf.date).num_days(), 3);
    }

    #[test]
    fn rejects_small_league() {
        let cfg = LeagueConfig {
            n_teams: 3,
            ..LeagueConfig::default()
        };
        match generate_synthetic_league(&cfg) {
            Err(DataError::InvalidConfig(msg)) => assert!(msg.contains("n_teams")),
            other => panic!("expected InvalidConfig, got {other:?}"),
        }
    }

    #[test]
    fn split_sizes() {
        let items: Vec<usize> = (0..100).collect();
        let (train, test) = chronological_split(&items, 0.2).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        assert!(train.iter().max() < test.iter().min());

        let items: Vec<usize> = (0..5).collect();
        let (train, test) = chronological_split(&items, 0.2).unwrap();
        assert_eq!((train.len(), test.len()), (4, 1));

        assert!(matches!(
            chronological_split(&[1, 2], 0.9),
            Err(DataError::DegenerateSplit { .. })
        ));
        assert!(matches!(
            chronological_split::<u8>(&[], 0.2),
            Err(DataError::DegenerateSplit { .. })
        ));
    }

    fn arb_match() -> impl Strategy<Value = RawMatch> {
        (
            "[a-z0-9]{1,8}",
            0i64..4000,
            "[0-9]{4}-[0-9]{2}",
            "[A-Za-z ]{1,10}",
            "[A-Za-z ]{1,10}",
            0u8..3,
            any::<bool>(),
            1u32..200,
            1u32..200,
            prop::sample::select(Stage::ALL.to_vec()),
        )
            .prop_filter_map(
                "distinct teams",
                |(id, day, season, h, a, l, hw, hp, ap, stage)| {
                    let (h, a) = (h.trim().to_string(), a.trim().to_string());
                    if h.is_empty() || a.is_empty() || h == a {
                        return None;
                    }
                    let (hs, as_) = if hw { (3, l) } else { (l, 3) };
                    Some(RawMatch {
                        match_id: id,
                        date: NaiveDate::from_ymd_opt(2010, 1, 1).unwrap() + Duration::days(day),
                        season,
                        home_team: h,
                        away_team: a,
                        home_sets: hs,
                        away_sets: as_,
                        home_points: hp,
                        away_points: ap,
                        stage,
                    })
                },
            )
    }

    proptest! {
        #[test]
        fn csv_round_trip(mut matches in prop::collection::vec(arb_match(), 0..20)) {
            sort_chronologically(&mut matches);
            let mut buf = Vec::new();
            write_matches_csv(&mut buf, &matches).unwrap();
            let parsed = read_matches_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(parsed, matches);
        }

        #[test]
        fn split_never_leaks(n in 2usize..300, frac in 0.01f64..0.99) {
            let items: Vec<usize> = (0..n).collect();
            if let Ok((train, test)) = chronological_split(&items, frac) {
                prop_assert_eq!(train.len() + test.len(), n);
                prop_assert_eq!(test.len(), ((n as f64) * frac).ceil() as usize);
                prop_assert!(train.last().unwrap() < test.first().unwrap());
            }
        }
    }
}
