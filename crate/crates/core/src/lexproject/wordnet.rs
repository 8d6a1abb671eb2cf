//! Reader for the WordNet 3.0 database files (`data.noun`, `data.verb`,
//! `data.adj`, `data.adv`).
//!
//! Every synset pointer is expanded to lemma-level edges: semantic pointers
//! (source/target `0000`) join every lemma of the source synset to every
//! lemma of the target synset, lexical pointers join the two numbered words.
//! Lemmas sharing a synset are additionally joined by a `synonym` edge.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{Edge, SemanticNetwork};
use crate::error::{Error, Result};

const DATA_FILES: [(char, &str); 4] = [
    ('n', "data.noun"),
    ('v', "data.verb"),
    ('a', "data.adj"),
    ('r', "data.adv"),
];

pub fn relation_name(symbol: &str) -> String {
    let name = match symbol {
        "!" => "antonym",
        "@" => "hypernym",
        "@i" => "instance_hypernym",
        "~" => "hyponym",
        "~i" => "instance_hyponym",
        "#m" => "member_holonym",
        "#s" => "substance_holonym",
        "#p" => "part_holonym",
        "%m" => "member_meronym",
        "%s" => "substance_meronym",
        "%p" => "part_meronym",
        "=" => "attribute",
        "+" => "derivation",
        ";c" => "domain_topic",
        "-c" => "member_topic",
        ";r" => "domain_region",
        "-r" => "member_region",
        ";u" => "domain_usage",
        "-u" => "member_usage",
        "*" => "entailment",
        ">" => "cause",
        "^" => "also_see",
        "$" => "verb_group",
        "&" => "similar_to",
        "<" => "participle",
        "\\" => "pertainym",
        other => return format!("ptr:{other}"),
    };
    name.to_string()
}

struct Pointer {
    symbol: String,
    target: (char, u64),
    source_word: usize,
    target_word: usize,
}

struct Synset {
    lemmas: Vec<String>,
    pointers: Vec<Pointer>,
    line_offset: u64,
}

/// Adjective satellites live in the adjective file.
fn file_pos(c: char) -> Option<char> {
    match c {
        'n' | 'v' | 'a' | 'r' => Some(c),
        's' => Some('a'),
        _ => None,
    }
}

fn normalize_lemma(raw: &str) -> String {
    // adjective syntactic markers: (a), (p), (ip)
    let base = match raw.find('(') {
        Some(i) if raw.ends_with(')') => &raw[..i],
        _ => raw,
    };
    base.to_lowercase()
}

fn parse_line(line: &str, path: &Path, offset: u64) -> Result<(u64, Synset)> {
    let bad = |msg: String| Error::Record {
        path: path.to_path_buf(),
        offset,
        message: msg,
    };
    let body = line.split(" | ").next().unwrap_or(line);
    let mut f = body.split_ascii_whitespace();
    let mut next = |what: &str| f.next().ok_or_else(|| bad(format!("truncated record: missing {what}")));

    let synset_offset: u64 = next("synset offset")?
        .parse()
        .map_err(|_| bad("invalid synset offset".into()))?;
    next("lex_filenum")?;
    next("ss_type")?;
    let w_cnt = usize::from_str_radix(next("w_cnt")?, 16).map_err(|_| bad("invalid word count".into()))?;
    let mut lemmas = Vec::with_capacity(w_cnt);
    for _ in 0..w_cnt {
        lemmas.push(normalize_lemma(next("word")?));
        next("lex_id")?;
    }
    let p_cnt: usize = next("p_cnt")?
        .parse()
        .map_err(|_| bad("invalid pointer count".into()))?;
    let mut pointers = Vec::with_capacity(p_cnt);
    for k in 0..p_cnt {
        let symbol = next("pointer symbol")?.to_string();
        let target_offset: u64 = next("pointer offset")?
            .parse()
            .map_err(|_| bad(format!("pointer {k}: invalid target offset")))?;
        let pos_tok = next("pointer pos")?;
        let pos = pos_tok
            .chars()
            .next()
            .and_then(file_pos)
            .filter(|_| pos_tok.len() == 1)
            .ok_or_else(|| bad(format!("pointer {k}: invalid part of speech {pos_tok:?}")))?;
        let st = next("pointer source/target")?;
        if st.len() != 4 {
            return Err(bad(format!("pointer {k}: invalid source/target field {st:?}")));
        }
        let source_word =
            usize::from_str_radix(&st[..2], 16).map_err(|_| bad(format!("pointer {k}: invalid source/target")))?;
        let target_word =
            usize::from_str_radix(&st[2..], 16).map_err(|_| bad(format!("pointer {k}: invalid source/target")))?;
        if source_word > w_cnt {
            return Err(bad(format!("pointer {k}: source word {source_word} out of range")));
        }
        pointers.push(Pointer {
            symbol,
            target: (pos, target_offset),
            source_word,
            target_word,
        });
    }
    Ok((
        synset_offset,
        Synset {
            lemmas,
            pointers,
            line_offset: offset,
        },
    ))
}

fn read_data_file(path: &Path, pos: char, synsets: &mut HashMap<(char, u64), Synset>) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut buf = Vec::new();
    let mut offset = 0u64;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        let line_offset = offset;
        offset += n as u64;
        // license header lines start with a space
        if buf.first().is_none_or(|&b| b == b' ' || b == b'\n' || b == b'\r') {
            continue;
        }
        let line = std::str::from_utf8(&buf).map_err(|_| Error::Record {
            path: path.to_path_buf(),
            offset: line_offset,
            message: "invalid UTF-8".into(),
        })?;
        let (key, synset) = parse_line(line.trim_end(), path, line_offset)?;
        synsets.insert((pos, key), synset);
    }
    Ok(())
}

/// Parses a WordNet database directory. Missing part-of-speech files are
/// skipped, but at least one must be present.
pub fn parse_wordnet_dir(dir: &Path) -> Result<SemanticNetwork> {
    let mut synsets: HashMap<(char, u64), Synset> = HashMap::new();
    let mut sources: HashMap<char, std::path::PathBuf> = HashMap::new();
    for (pos, name) in DATA_FILES {
        let p = dir.join(name);
        if p.exists() {
            read_data_file(&p, pos, &mut synsets)?;
            sources.insert(pos, p);
        }
    }
    if sources.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{}: no WordNet data.* files found",
            dir.display()
        )));
    }

    let mut keys: Vec<&(char, u64)> = synsets.keys().collect();
    keys.sort();
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for key in keys {
        let s = &synsets[key];
        nodes.extend(s.lemmas.iter().cloned());
        for (i, a) in s.lemmas.iter().enumerate() {
            for b in &s.lemmas[i + 1..] {
                edges.push(Edge::new(a.clone(), "synonym", b.clone()));
            }
        }
        for p in &s.pointers {
            let target = synsets.get(&p.target).ok_or_else(|| Error::Record {
                path: sources[&key.0].clone(),
                offset: s.line_offset,
                message: format!("dangling pointer {:?} to {}:{:08}", p.symbol, p.target.0, p.target.1),
            })?;
            let rel = relation_name(&p.symbol);
            if p.source_word == 0 && p.target_word == 0 {
                for a in &s.lemmas {
                    for b in &target.lemmas {
                        edges.push(Edge::new(a.clone(), rel.clone(), b.clone()));
                    }
                }
            } else {
                let a = s.lemmas.get(p.source_word.wrapping_sub(1));
                let b = target.lemmas.get(p.target_word.wrapping_sub(1));
                match (a, b) {
                    (Some(a), Some(b)) => edges.push(Edge::new(a.clone(), rel, b.clone())),
                    _ => {
                        return Err(Error::Record {
                            path: sources[&key.0].clone(),
                            offset: s.line_offset,
                            message: format!("lexical pointer {:?} names a missing word", p.symbol),
                        })
                    }
                }
            }
        }
    }
    Ok(SemanticNetwork::new(nodes, edges))
}
