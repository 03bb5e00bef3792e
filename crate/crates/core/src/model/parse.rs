//! Circuit text format.
//!
//! One instruction per line, lowercase, whitespace-separated:
//!
//! ```text
//! # bell pair
//! qubits 2
//! h 0
//! cx 0 1
//! measure all
//! ```
//!
//! The `qubits N` header comes first, `measure all` ends the program, and
//! lines beginning with `#` are comments. Parse errors report the 1-based
//! line number.

use thiserror::Error;

use crate::model::circuit::{Circuit, Gate, Opcode};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

pub fn parse_circuit(text: &str) -> Result<Circuit, ParseError> {
    let mut num_qubits: Option<u32> = None;
    let mut gates: Vec<Gate> = Vec::new();
    let mut measured = false;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if measured {
            return Err(ParseError::new(
                line_no,
                "instruction after `measure all`",
            ));
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line");
        let args: Vec<&str> = parts.collect();

        if num_qubits.is_none() {
            if word != "qubits" {
                return Err(ParseError::new(
                    line_no,
                    "expected `qubits N` header before instructions",
                ));
            }
            let n = parse_header_count(&args, line_no)?;
            num_qubits = Some(n);
            continue;
        }

        match word {
            "qubits" => {
                return Err(ParseError::new(line_no, "duplicate `qubits` header"));
            }
            "measure" => {
                if args != ["all"] {
                    return Err(ParseError::new(
                        line_no,
                        "expected `measure all`",
                    ));
                }
                measured = true;
            }
            mnemonic => {
                let opcode = Opcode::from_mnemonic(mnemonic).ok_or_else(|| {
                    ParseError::new(line_no, format!("unknown instruction `{mnemonic}`"))
                })?;
                gates.push(parse_gate(opcode, &args, line_no)?);
            }
        }
    }

    let num_qubits = num_qubits
        .ok_or_else(|| ParseError::new(last_line.max(1), "missing `qubits N` header"))?;
    if !measured {
        return Err(ParseError::new(
            last_line.max(1),
            "missing final `measure all`",
        ));
    }
    Ok(Circuit::new(num_qubits, gates))
}

fn parse_header_count(args: &[&str], line: usize) -> Result<u32, ParseError> {
    if args.len() != 1 {
        return Err(ParseError::new(line, "expected `qubits N`"));
    }
    let n: u32 = args[0]
        .parse()
        .map_err(|_| ParseError::new(line, format!("invalid qubit count `{}`", args[0])))?;
    if n == 0 {
        return Err(ParseError::new(line, "qubit count must be positive"));
    }
    Ok(n)
}

fn parse_gate(opcode: Opcode, args: &[&str], line: usize) -> Result<Gate, ParseError> {
    let expected = opcode.arity() + usize::from(opcode.takes_angle());
    if args.len() != expected {
        return Err(ParseError::new(
            line,
            format!(
                "`{}` takes {} argument{}, found {}",
                opcode.mnemonic(),
                expected,
                if expected == 1 { "" } else { "s" },
                args.len()
            ),
        ));
    }
    let qubit = |s: &str| -> Result<u32, ParseError> {
        s.parse()
            .map_err(|_| ParseError::new(line, format!("invalid qubit index `{s}`")))
    };
    match opcode {
        Opcode::Cx => Ok(Gate::cx(qubit(args[0])?, qubit(args[1])?)),
        Opcode::Rz => {
            let q = qubit(args[0])?;
            let angle: f64 = args[1]
                .parse()
                .map_err(|_| ParseError::new(line, format!("invalid angle `{}`", args[1])))?;
            Ok(Gate::rz(q, angle))
        }
        other => Ok(Gate::single(other, qubit(args[0])?).expect("single-qubit opcode")),
    }
}
