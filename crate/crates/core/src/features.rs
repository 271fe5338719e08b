//! Leakage-free feature engineering.
//!
//! [`build_features`] walks the chronologically sorted match stream once. For
//! every match it first reads the per-team rolling state (which only reflects
//! earlier matches) into a [`FeatureVector`], then folds the match outcome into
//! that state.

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ladder_cmp, RawMatch, Stage};

pub const FEATURE_COUNT: usize = 19;

/// Column names, in the fixed feature order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "away_current_position",
    "away_prev_season_position",
    "away_prev_game_performance",
    "away_avg_points",
    "away_avg_points_conceded",
    "away_away_form",
    "away_form",
    "away_win_percentage",
    "head_to_head_form",
    "home_current_position",
    "home_prev_season_position",
    "home_prev_game_performance",
    "home_avg_points",
    "home_avg_points_conceded",
    "home_form",
    "home_home_form",
    "home_rest_time",
    "home_win_percentage",
    "match_importance",
];

/// Human-readable labels used in reports, same order as [`FEATURE_NAMES`].
pub const FEATURE_LABELS: [&str; FEATURE_COUNT] = [
    "Away team's current position",
    "Away team's position in previous season",
    "Away team's previous game performance",
    "Away team's average points",
    "Away team's average points conceded",
    "Away team's away form",
    "Away team's form",
    "Away team's win percentage",
    "Head to head form",
    "Home team's current position",
    "Home team's position in previous season",
    "Home team's previous game performance",
    "Home team's average points",
    "Home team's average points conceded",
    "Home team's form",
    "Home team's home form",
    "Home team's rest time",
    "Home team's win percentage",
    "Match importance",
];

/// Feature column indices.
pub mod idx {
    pub const AWAY_CURRENT_POSITION: usize = 0;
    pub const AWAY_PREV_SEASON_POSITION: usize = 1;
    pub const AWAY_PREV_GAME_PERFORMANCE: usize = 2;
    pub const AWAY_AVG_POINTS: usize = 3;
    pub const AWAY_AVG_POINTS_CONCEDED: usize = 4;
    pub const AWAY_AWAY_FORM: usize = 5;
    pub const AWAY_FORM: usize = 6;
    pub const AWAY_WIN_PERCENTAGE: usize = 7;
    pub const HEAD_TO_HEAD_FORM: usize = 8;
    pub const HOME_CURRENT_POSITION: usize = 9;
    pub const HOME_PREV_SEASON_POSITION: usize = 10;
    pub const HOME_PREV_GAME_PERFORMANCE: usize = 11;
    pub const HOME_AVG_POINTS: usize = 12;
    pub const HOME_AVG_POINTS_CONCEDED: usize = 13;
    pub const HOME_FORM: usize = 14;
    pub const HOME_HOME_FORM: usize = 15;
    pub const HOME_REST_TIME: usize = 16;
    pub const HOME_WIN_PERCENTAGE: usize = 17;
    pub const MATCH_IMPORTANCE: usize = 18;
}

/// Default EMA smoothing constant.
pub const DEFAULT_ALPHA: f64 = 0.2;
/// Number of recent matches that make up a form window.
pub const FORM_WINDOW: usize = 5;
/// Rest is capped at a week.
pub const MAX_REST_DAYS: f64 = 7.0;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("EMA alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("match on {match_date} precedes the previous match on {last_date}")]
    NegativeInterval {
        last_date: NaiveDate,
        match_date: NaiveDate,
    },
    #[error("matches are not in chronological order at {0}")]
    Unsorted(String),
    #[error("malformed feature row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<csv::Error> for FeatureError {
    fn from(e: csv::Error) -> Self {
        FeatureError::Io(e.to_string())
    }
}

impl From<std::io::Error> for FeatureError {
    fn from(e: std::io::Error) -> Self {
        FeatureError::Io(e.to_string())
    }
}

/// One match described by the 19 features plus its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub match_id: String,
    pub values: [f64; FEATURE_COUNT],
    /// 1 if the home team won.
    pub label: u8,
}

impl FeatureVector {
    pub fn get(&self, column: usize) -> f64 {
        self.values[column]
    }
}

pub fn ema_update(
    previous: Option<f64>,
    observation: f64,
    alpha: f64,
) -> Result<f64, FeatureError> {
    check_alpha(alpha)?;
    Ok(match previous {
        None => observation,
        Some(prev) => alpha * observation + (1.0 - alpha) * prev,
    })
}

fn check_alpha(alpha: f64) -> Result<(), FeatureError> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(FeatureError::InvalidAlpha(alpha))
    }
}

/// Exponential average of set differentials, folded oldest to newest. No history is neutral (0).
pub fn compute_form(set_diffs: &[f64], alpha: f64) -> Result<f64, FeatureError> {
    check_alpha(alpha)?;
    let mut acc = None;
    for &d in set_diffs {
        acc = Some(ema_update(acc, d, alpha)?);
    }
    Ok(acc.unwrap_or(0.0))
}

/// Days since the previous match, capped at [`MAX_REST_DAYS`]. A team with no previous match is fully rested.
pub fn rest_days(last_date: Option<NaiveDate>, match_date: NaiveDate) -> Result<f64, FeatureError> {
    match last_date {
        None => Ok(MAX_REST_DAYS),
        Some(last) if match_date < last => Err(FeatureError::NegativeInterval {
            last_date: last,
            match_date,
        }),
        Some(last) => Ok(((match_date - last).num_days() as f64).min(MAX_REST_DAYS)),
    }
}

pub fn match_importance(stage: Stage) -> u8 {
    match stage {
        Stage::League => 0,
        Stage::QuarterFinal => 1,
        Stage::SemiFinal => 2,
        Stage::Final => 3,
    }
}

/// Bounded window of the most recent observations, newest last.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecentWindow(Vec<f64>);

impl RecentWindow {
    pub fn push(&mut self, value: f64) {
        if self.0.len() == FORM_WINDOW {
            self.0.remove(0);
        }
        self.0.push(value);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn clear(&mut self) {
        self.0.clear();
    }
}

/// Rolling per-team state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TeamState {
    /// Matches played in the current season.
    pub matches_played: u32,
    /// Matches won in the current season.
    pub wins: u32,
    pub ema_points_scored: Option<f64>,
    pub ema_points_conceded: Option<f64>,
    pub recent_set_diffs: RecentWindow,
    pub home_set_diffs: RecentWindow,
    pub away_set_diffs: RecentWindow,
    pub last_match_date: Option<NaiveDate>,
    pub last_game_performance: f64,
    /// Ladder (league-stage) record in the current season.
    pub ladder_wins: u32,
    pub ladder_set_diff: i32,
}

impl TeamState {
    pub fn win_percentage(&self) -> f64 {
        if self.matches_played == 0 {
            0.0
        } else {
            100.0 * f64::from(self.wins) / f64::from(self.matches_played)
        }
    }

    fn start_season(&mut self) {
        self.matches_played = 0;
        self.wins = 0;
        self.recent_set_diffs.clear();
        self.home_set_diffs.clear();
        self.away_set_diffs.clear();
        self.last_match_date = None;
        self.ladder_wins = 0;
        self.ladder_set_diff = 0;
    }
}

/// Head-to-head EMA of set differentials keyed by the unordered team pair.
/// The stored value is from the lexicographically smaller team's side.
#[derive(Debug, Clone, Default)]
pub struct HeadToHeadState {
    values: HashMap<(String, String), f64>,
}

impl HeadToHeadState {
    /// Value from `team`'s perspective against `opponent`; 0 when they never met.
    pub fn get(&self, team: &str, opponent: &str) -> f64 {
        if team <= opponent {
            self.values
                .get(&(team.to_string(), opponent.to_string()))
                .copied()
                .unwrap_or(0.0)
        } else {
            -self
                .values
                .get(&(opponent.to_string(), team.to_string()))
                .copied()
                .unwrap_or(0.0)
        }
    }

    /// Fold a set differential observed from `team`'s side.
    pub fn update(
        &mut self,
        team: &str,
        opponent: &str,
        set_diff: f64,
        alpha: f64,
    ) -> Result<(), FeatureError> {
        let (key, obs) = if team <= opponent {
            ((team.to_string(), opponent.to_string()), set_diff)
        } else {
            ((opponent.to_string(), team.to_string()), -set_diff)
        };
        let prev = self.values.get(&key).copied();
        self.values.insert(key, ema_update(prev, obs, alpha)?);
        Ok(())
    }
}

/// The fold behind [`build_features`], exposed so callers can stream matches.
#[derive(Debug, Clone)]
pub struct FeatureBuilder {
    alpha: f64,
    teams: HashMap<String, TeamState>,
    h2h: HeadToHeadState,
    season: Option<String>,
    /// Teams that have appeared in the current season.
    season_teams: Vec<String>,
    /// Final ladder positions of the previous season.
    prev_ranks: HashMap<String, usize>,
    prev_table_size: Option<usize>,
    last_seen: Option<(NaiveDate, String)>,
}

impl FeatureBuilder {
    pub fn new(alpha: f64) -> Result<Self, FeatureError> {
        check_alpha(alpha)?;
        Ok(FeatureBuilder {
            alpha,
            teams: HashMap::new(),
            h2h: HeadToHeadState::default(),
            season: None,
            season_teams: Vec::new(),
            prev_ranks: HashMap::new(),
            prev_table_size: None,
            last_seen: None,
        })
    }

    pub fn team(&self, name: &str) -> Option<&TeamState> {
        self.teams.get(name)
    }

    pub fn head_to_head(&self) -> &HeadToHeadState {
        &self.h2h
    }

    fn ladder(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.season_teams.iter().map(String::as_str).collect();
        names.sort_by(|a, b| {
            let sa = &self.teams[*a];
            let sb = &self.teams[*b];
            ladder_cmp(
                (a, sa.ladder_wins, sa.ladder_set_diff),
                (b, sb.ladder_wins, sb.ladder_set_diff),
            )
        });
        names
    }

    fn rank_of(&self, team: &str) -> usize {
        self.ladder()
            .iter()
            .position(|t| *t == team)
            .map_or(self.season_teams.len() + 1, |p| p + 1)
    }

    fn begin_season(&mut self, season: &str) {
        if self.season.is_some() {
            let ladder: Vec<String> = self.ladder().into_iter().map(str::to_string).collect();
            self.prev_table_size = Some(ladder.len());
            self.prev_ranks = ladder
                .into_iter()
                .enumerate()
                .map(|(pos, t)| (t, pos + 1))
                .collect();
            for state in self.teams.values_mut() {
                state.start_season();
            }
        }
        self.season = Some(season.to_string());
        self.season_teams.clear();
    }

    fn enter_team(&mut self, team: &str) {
        self.teams.entry(team.to_string()).or_default();
        if !self.season_teams.iter().any(|t| t == team) {
            self.season_teams.push(team.to_string());
        }
    }

    fn prev_season_rank(&self, team: &str) -> f64 {
        let sentinel = self.prev_table_size.unwrap_or(self.season_teams.len()) + 1;
        self.prev_ranks.get(team).copied().unwrap_or(sentinel) as f64
    }

    /// Emit the feature vector for `m` from prior state, then absorb its outcome.
    pub fn push(&mut self, m: &RawMatch) -> Result<FeatureVector, FeatureError> {
        let key = (m.date, m.match_id.clone());
        if let Some(prev) = &self.last_seen {
            if key < *prev {
                return Err(FeatureError::Unsorted(m.match_id.clone()));
            }
        }
        self.last_seen = Some(key);

        if self.season.as_deref() != Some(m.season.as_str()) {
            self.begin_season(&m.season);
        }
        self.enter_team(&m.home_team);
        self.enter_team(&m.away_team);

        let values = self.snapshot(m)?;
        let fv = FeatureVector {
            match_id: m.match_id.clone(),
            values,
            label: u8::from(m.home_won()),
        };
        self.absorb(m)?;
        Ok(fv)
    }

    fn snapshot(&self, m: &RawMatch) -> Result<[f64; FEATURE_COUNT], FeatureError> {
        let home = &self.teams[&m.home_team];
        let away = &self.teams[&m.away_team];
        let a = self.alpha;
        let mut v = [0.0; FEATURE_COUNT];
        v[idx::AWAY_CURRENT_POSITION] = self.rank_of(&m.away_team) as f64;
        v[idx::AWAY_PREV_SEASON_POSITION] = self.prev_season_rank(&m.away_team);
        v[idx::AWAY_PREV_GAME_PERFORMANCE] = away.last_game_performance;
        v[idx::AWAY_AVG_POINTS] = away.ema_points_scored.unwrap_or(0.0);
        v[idx::AWAY_AVG_POINTS_CONCEDED] = away.ema_points_conceded.unwrap_or(0.0);
        v[idx::AWAY_AWAY_FORM] = compute_form(away.away_set_diffs.as_slice(), a)?;
        v[idx::AWAY_FORM] = compute_form(away.recent_set_diffs.as_slice(), a)?;
        v[idx::AWAY_WIN_PERCENTAGE] = away.win_percentage();
        v[idx::HEAD_TO_HEAD_FORM] = self.h2h.get(&m.home_team, &m.away_team);
        v[idx::HOME_CURRENT_POSITION] = self.rank_of(&m.home_team) as f64;
        v[idx::HOME_PREV_SEASON_POSITION] = self.prev_season_rank(&m.home_team);
        v[idx::HOME_PREV_GAME_PERFORMANCE] = home.last_game_performance;
        v[idx::HOME_AVG_POINTS] = home.ema_points_scored.unwrap_or(0.0);
        v[idx::HOME_AVG_POINTS_CONCEDED] = home.ema_points_conceded.unwrap_or(0.0);
        v[idx::HOME_FORM] = compute_form(home.recent_set_diffs.as_slice(), a)?;
        v[idx::HOME_HOME_FORM] = compute_form(home.home_set_diffs.as_slice(), a)?;
        v[idx::HOME_REST_TIME] = rest_days(home.last_match_date, m.date)?;
        v[idx::HOME_WIN_PERCENTAGE] = home.win_percentage();
        v[idx::MATCH_IMPORTANCE] = f64::from(match_importance(m.stage));
        Ok(v)
    }

    fn absorb(&mut self, m: &RawMatch) -> Result<(), FeatureError> {
        let alpha = self.alpha;
        let diff = m.home_set_diff();
        let home_won = m.home_won();
        let sides = [
            (
                &m.home_team,
                diff,
                f64::from(m.home_points),
                f64::from(m.away_points),
                home_won,
                true,
            ),
            (
                &m.away_team,
                -diff,
                f64::from(m.away_points),
                f64::from(m.home_points),
                !home_won,
                false,
            ),
        ];
        for (team, d, scored, conceded, won, at_home) in sides {
            let s = self.teams.get_mut(team.as_str()).expect("team entered");
            s.matches_played += 1;
            s.wins += u32::from(won);
            s.ema_points_scored = Some(ema_update(s.ema_points_scored, scored, alpha)?);
            s.ema_points_conceded = Some(ema_update(s.ema_points_conceded, conceded, alpha)?);
            s.recent_set_diffs.push(d);
            if at_home {
                s.home_set_diffs.push(d);
            } else {
                s.away_set_diffs.push(d);
            }
            s.last_match_date = Some(m.date);
            s.last_game_performance = d;
            if m.stage == Stage::League {
                s.ladder_wins += u32::from(won);
                s.ladder_set_diff += d as i32;
            }
        }
        self.h2h.update(&m.home_team, &m.away_team, diff, alpha)
    }
}

/// Turn chronologically sorted matches into feature vectors, one per match.
pub fn build_features(
    matches: &[RawMatch],
    alpha: f64,
) -> Result<Vec<FeatureVector>, FeatureError> {
    let mut builder = FeatureBuilder::new(alpha)?;
    matches.iter().map(|m| builder.push(m)).collect()
}

/// Header of the persisted feature CSV: `match_id`, the 19 features, `label`.
pub fn feature_csv_header() -> Vec<&'static str> {
    std::iter::once("match_id")
        .chain(FEATURE_NAMES)
        .chain(std::iter::once("label"))
        .collect()
}

pub fn write_features_csv<W: Write>(writer: W, rows: &[FeatureVector]) -> Result<(), FeatureError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(feature_csv_header())?;
    for fv in rows {
        let mut record = Vec::with_capacity(FEATURE_COUNT + 2);
        record.push(fv.match_id.clone());
        // `{:?}` on f64 is the shortest representation that round-trips exactly.
        record.extend(fv.values.iter().map(|v| format!("{v:?}")));
        record.push(fv.label.to_string());
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_features_csv<R: Read>(reader: R) -> Result<Vec<FeatureVector>, FeatureError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != feature_csv_header() {
        return Err(FeatureError::MalformedRow {
            line: 1,
            reason: "unexpected feature CSV header".into(),
        });
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |reason: String| FeatureError::MalformedRow { line, reason };
        if record.len() != FEATURE_COUNT + 2 {
            return Err(bad(format!("expected {} fields", FEATURE_COUNT + 2)));
        }
        let mut values = [0.0; FEATURE_COUNT];
        for (i, v) in values.iter_mut().enumerate() {
            *v = record[i + 1]
                .parse()
                .map_err(|e| bad(format!("{}: {e}", FEATURE_NAMES[i])))?;
        }
        let label: u8 = record[FEATURE_COUNT + 1]
            .parse()
            .map_err(|e| bad(format!("label: {e}")))?;
        if label > 1 {
            return Err(bad(format!("label must be 0 or 1, got {label}")));
        }
        out.push(FeatureVector {
            match_id: record[0].to_string(),
            values,
            label,
        });
    }
    Ok(out)
}
