//! Versioned JSON envelopes for reports.

use std::io::{self, Write};

use serde::Serialize;

use crate::params::RawParams;

pub const SCHEMA: u32 = 1;

/// A report together with the resolved configuration that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope<'a, C: Serialize, R: Serialize> {
    pub schema: u32,
    pub kind: &'a str,
    pub params: &'a RawParams,
    pub config: &'a C,
    pub pass: Option<bool>,
    pub report: &'a R,
}

impl<'a, C: Serialize, R: Serialize> Envelope<'a, C, R> {
    pub fn new(kind: &'a str, params: &'a RawParams, config: &'a C, report: &'a R) -> Self {
        Envelope {
            schema: SCHEMA,
            kind,
            params,
            config,
            pass: None,
            report,
        }
    }

    pub fn with_pass(mut self, pass: bool) -> Self {
        self.pass = Some(pass);
        self
    }

    pub fn write<W: Write>(&self, w: W) -> io::Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(io::Error::other)
    }
}
