//! `zones`: the heart-rate zone table for an age.

use cardioloop_core::hr_zones::compute_zone_model;
use cardioloop_core::{AthleteProfile, HrMaxFormula, ZoneModel};
use clap::Args;

use crate::config::Settings;
use crate::exit::{CliResult, OrExit, USAGE};
use crate::output::Output;

#[derive(Debug, Args)]
pub struct ZonesArgs {
    #[arg(long)]
    pub age: u32,
    /// tanaka or fox; defaults to the configured formula.
    #[arg(long)]
    pub formula: Option<HrMaxFormula>,
}

pub fn zones(settings: &Settings, args: &ZonesArgs, out: &mut Output) -> CliResult {
    let formula = args.formula.unwrap_or(settings.session.hr_max_formula);
    let model = compute_zone_model(&AthleteProfile::new(args.age).with_formula(formula)).or_exit(USAGE)?;
    out.text(&table(&model))
}

/// `hr_max` then one `[lower, upper)` row per zone, one decimal place.
pub fn table(model: &ZoneModel) -> String {
    let mut s = format!("hr_max {:.1}\n", model.hr_max_bpm);
    for (i, w) in model.boundaries.windows(2).enumerate() {
        s.push_str(&format!("Zone {}  {:.1}–{:.1}\n", i + 1, w[0], w[1]));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanaka_age_30() {
        let t = table(&compute_zone_model(&AthleteProfile::new(30)).unwrap());
        assert!(t.starts_with("hr_max 187.0\n"));
        assert!(t.contains("Zone 3  130.9–149.6\n"));
        assert_eq!(t.lines().count(), 6);
    }
}
