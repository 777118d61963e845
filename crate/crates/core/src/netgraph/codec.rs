//! Single-line genome strings.
//!
//! ```text
//! genome     := "space=" space ";" body
//! space      := "NB201" | "DLITE" | "TFORM"
//! cell body  := "C=" uint ";N=" uint ";" node ("+" node)*
//! node       := "|" edge "|" (edge "|")*
//! edge       := op "~" uint
//! tform body := "L=" uint ",H=" uint ",DM=" uint ",DF=" uint ",T=" uint ",V=" uint
//! uint       := "0" | [1-9][0-9]*
//! op         := none | skip_connect | nor_conv_1x1 | nor_conv_3x3 | avg_pool_3x3
//!             | max_pool_3x3 | sep_conv_3x3 | sep_conv_5x5 | dil_conv_3x3 | dil_conv_5x5
//! ```
//!
//! The k-th `node` group (1-based) lists the incoming edges of intermediate
//! node k; `C` is the stem channel count and `N` the number of cells per stage.
//! An NB201 example:
//!
//! ```text
//! space=NB201;C=16;N=5;|nor_conv_3x3~0|+|none~0|skip_connect~1|+|avg_pool_3x3~0|nor_conv_1x1~1|nor_conv_3x3~2|
//! ```
//!
//! There is no whitespace anywhere and no trailing newline; the parser is
//! byte-exact and `encode(decode(s)) == s` for every accepted `s`.

use super::{CellGenome, Edge, Genome, GenomeError, OpLabel, SpaceId, TransformerGenome};
use std::fmt::Write;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("parse error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

pub fn encode(g: &Genome) -> String {
    let mut s = format!("space={};", g.space());
    match g {
        Genome::Cell(c) => {
            write!(s, "C={};N={};", c.stem_channels, c.stack_depth).unwrap();
            for dst in 1..=c.nodes {
                if dst > 1 {
                    s.push('+');
                }
                s.push('|');
                for e in c.edges.iter().filter(|e| e.dst == dst) {
                    write!(s, "{}~{}|", e.op, e.src).unwrap();
                }
            }
        }
        Genome::Transformer(t) => {
            write!(
                s,
                "L={},H={},DM={},DF={},T={},V={}",
                t.layers, t.heads, t.d_model, t.d_ff, t.seq_len, t.vocab
            )
            .unwrap();
        }
    }
    s
}

pub fn decode(s: &str) -> Result<Genome, GenomeError> {
    let mut p = Cursor { src: s.as_bytes(), pos: 0 };
    p.expect("space=")?;
    let start = p.pos;
    let space_tok = p.take_while(|b| b.is_ascii_alphanumeric());
    let space = match space_tok {
        "NB201" => SpaceId::Nb201,
        "DLITE" => SpaceId::DartsLite,
        "TFORM" => SpaceId::Transformer,
        other => return Err(p.error_at(start, format!("unknown space `{other}`")).into()),
    };
    p.expect(";")?;
    let genome = match space {
        SpaceId::Transformer => {
            let mut f = [0usize; 6];
            for (i, key) in ["L=", ",H=", ",DM=", ",DF=", ",T=", ",V="].iter().enumerate() {
                p.expect(key)?;
                f[i] = p.uint()?;
            }
            Genome::Transformer(TransformerGenome {
                layers: f[0],
                heads: f[1],
                d_model: f[2],
                d_ff: f[3],
                seq_len: f[4],
                vocab: f[5],
            })
        }
        _ => {
            p.expect("C=")?;
            let stem_channels = p.uint()?;
            p.expect(";N=")?;
            let stack_depth = p.uint()?;
            p.expect(";")?;
            let mut edges = Vec::new();
            let mut dst = 0;
            loop {
                dst += 1;
                p.expect("|")?;
                loop {
                    let op_start = p.pos;
                    let tok = p.take_while(|b| b.is_ascii_alphanumeric() || b == b'_');
                    let op = OpLabel::from_token(tok)
                        .ok_or_else(|| p.error_at(op_start, format!("unknown op `{tok}`")))?;
                    p.expect("~")?;
                    let src = p.uint()?;
                    p.expect("|")?;
                    edges.push(Edge { src, dst, op });
                    if p.at_end() || p.peek() == Some(b'+') {
                        break;
                    }
                }
                if p.at_end() {
                    break;
                }
                p.expect("+")?;
            }
            Genome::Cell(CellGenome {
                space,
                nodes: dst,
                stem_channels,
                stack_depth,
                edges,
            })
        }
    };
    if !p.at_end() {
        return Err(p.error("trailing input").into());
    }
    genome.validate()?;
    Ok(genome)
}

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        self.error_at(self.pos, message)
    }

    fn error_at(&self, offset: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            offset,
            message: message.into(),
        }
    }

    fn expect(&mut self, lit: &str) -> Result<(), ParseError> {
        let lit_b = lit.as_bytes();
        for (i, &b) in lit_b.iter().enumerate() {
            if self.src.get(self.pos + i) != Some(&b) {
                return Err(self.error_at(self.pos + i, format!("expected `{lit}`")));
            }
        }
        self.pos += lit_b.len();
        Ok(())
    }

    fn take_while(&mut self, pred: impl Fn(u8) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(&pred) {
            self.pos += 1;
        }
        // Only ASCII bytes pass the predicates used here.
        std::str::from_utf8(&self.src[start..self.pos]).unwrap()
    }

    fn uint(&mut self) -> Result<usize, ParseError> {
        let start = self.pos;
        let digits = self.take_while(|b| b.is_ascii_digit());
        if digits.is_empty() {
            return Err(self.error_at(start, "expected unsigned integer"));
        }
        if digits.len() > 1 && digits.starts_with('0') {
            return Err(self.error_at(start, "leading zero"));
        }
        digits
            .parse()
            .map_err(|_| self.error_at(start, "integer out of range"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::random_genome;

    #[test]
    fn empty_string_fails_at_zero() {
        match decode("") {
            Err(GenomeError::Parse(e)) => assert_eq!(e.offset, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nb201_string_matches_grammar() {
        let s = "space=NB201;C=16;N=5;|nor_conv_3x3~0|+|none~0|skip_connect~1|+|avg_pool_3x3~0|nor_conv_1x1~1|nor_conv_3x3~2|";
        let g = decode(s).unwrap();
        let Genome::Cell(c) = &g else { panic!() };
        assert_eq!(c.nodes, 3);
        assert_eq!(c.edges.len(), 6);
        assert_eq!(c.edges[2], Edge { src: 1, dst: 2, op: OpLabel::Skip });
        assert_eq!(encode(&g), s);
    }

    #[test]
    fn transformer_string() {
        let s = "space=TFORM;L=2,H=4,DM=128,DF=512,T=32,V=1000";
        let g = decode(s).unwrap();
        assert_eq!(
            g,
            Genome::Transformer(TransformerGenome::new(2, 4, 128, 512, 32, 1000).unwrap())
        );
        assert_eq!(encode(&g), s);
    }

    #[test]
    fn errors_carry_offsets() {
        let cases = [
            ("space=NB101;", 6),
            ("space=NB201;C=16;N=5;|bogus~0|", 22),
            ("space=NB201;C=16;N=5;|none~0|x", 29),
            ("space=NB201;C=016;N=5;|none~0|", 14),
            ("space=TFORM;L=2,H=4,DM=128,DF=512,T=32", 38),
            ("space=TFORM;L=2,H=4,DM=128,DF=512,T=32,V=9 ", 42),
        ];
        for (s, off) in cases {
            match decode(s) {
                Err(GenomeError::Parse(e)) => assert_eq!(e.offset, off, "{s}: {e}"),
                other => panic!("{s}: {other:?}"),
            }
        }
    }

    #[test]
    fn structurally_invalid_genomes_are_rejected() {
        // source not before destination
        assert!(matches!(
            decode("space=NB201;C=16;N=5;|none~1|"),
            Err(GenomeError::Invalid(_))
        ));
        // op outside the DLITE alphabet
        assert!(matches!(
            decode("space=DLITE;C=16;N=2;|nor_conv_3x3~0|"),
            Err(GenomeError::Invalid(_))
        ));
        // heads must divide d_model
        assert!(matches!(
            decode("space=TFORM;L=2,H=3,DM=128,DF=512,T=32,V=1000"),
            Err(GenomeError::Invalid(_))
        ));
    }

    #[test]
    fn random_genomes_round_trip() {
        for seed in 0..300 {
            for space in SpaceId::ALL {
                let g = random_genome(space, seed);
                let s = encode(&g);
                assert!(!s.contains(char::is_whitespace));
                assert_eq!(decode(&s).unwrap(), g);
            }
        }
    }
}
