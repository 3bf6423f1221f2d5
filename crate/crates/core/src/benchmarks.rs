use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alternating::{solve, SolveOutput, SolverOptions};
use crate::error::{Error, Result};
use crate::model::{Problem, RateModel};

/// Multiple-access scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    PscomRsma,
    PscomSdma,
    PscomNoma,
    ConventionalRsma,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::PscomRsma, Scheme::PscomSdma, Scheme::PscomNoma, Scheme::ConventionalRsma];

    pub fn tag(self) -> &'static str {
        match self {
            Scheme::PscomRsma => "pscom-rsma",
            Scheme::PscomSdma => "pscom-sdma",
            Scheme::PscomNoma => "pscom-noma",
            Scheme::ConventionalRsma => "conventional-rsma",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.tag() == s)
            .ok_or_else(|| Error::Parse(format!("unknown scheme '{s}'")))
    }
}

/// Solves `problem` under `scheme`. With `conventional_keeps_knowledge` the
/// conventional baseline still carries the knowledge stream in the common
/// message.
pub fn solve_scheme(problem: &Problem, scheme: Scheme, conventional_keeps_knowledge: bool, opts: &SolverOptions) -> Result<SolveOutput> {
    let model = RateModel::new(scheme, problem, conventional_keeps_knowledge);
    solve(problem, &model, opts)
}
