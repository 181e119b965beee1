//! Similarity coverage analysis: post-hoc resolution of queries that
//! retrieve the same answer.
//!
//! When several queries hold the same gallery item at their current rank,
//! the one with the highest score keeps it (ties go to the lower query id)
//! and every other member advances to its own next-ranked candidate. Rounds
//! repeat until no collisions remain, no member can advance, or the round
//! cap is hit.
//!
//! With `depth > 1` the same procedure fills output slots 2..=depth from the
//! entries not yet placed, so the top `depth` answers are de-duplicated
//! across queries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::similarity::{dot, Hit, RankedList};
use crate::store::EmbeddingMatrix;
use crate::text::{fmt_sig9, parse_field, Header};

#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionPolicy {
    /// Number of leading output slots that are de-duplicated.
    pub depth: usize,
    /// Round cap per slot; `None` means the retrieval depth `n`.
    pub max_rounds: Option<usize>,
    /// When set, a collision only counts if some pair of member queries has
    /// text-embedding cosine above this value.
    pub similarity_gate: Option<f64>,
}

impl Default for ResolutionPolicy {
    fn default() -> Self {
        Self {
            depth: 1,
            max_rounds: None,
            similarity_gate: None,
        }
    }
}

impl ResolutionPolicy {
    pub fn to_header(&self, retrieval_depth: usize) -> Header {
        Header::new()
            .with("sca_depth", self.depth)
            .with("sca_max_rounds", self.max_rounds.unwrap_or(retrieval_depth))
            .with(
                "sca_gate",
                self.similarity_gate.map_or("off".to_string(), |g| g.to_string()),
            )
            .with("sca_tie_break", "lower_query_id")
    }
}

impl fmt::Display for ResolutionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "depth={}", self.depth)?;
        match self.max_rounds {
            Some(r) => write!(f, ",max_rounds={r}")?,
            None => write!(f, ",max_rounds=n")?,
        }
        match self.similarity_gate {
            Some(g) => write!(f, ",gate={g}"),
            None => write!(f, ",gate=off"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConflictMember {
    pub query_id: usize,
    pub score: f32,
    /// 1-based rank of the contested answer in this query's input list.
    pub rank: usize,
}

/// Two or more queries whose current answer is the same gallery item.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictGroup {
    pub answer_id: usize,
    /// Ordered by query id.
    pub members: Vec<ConflictMember>,
    pub detected_at_round: usize,
}

impl ConflictGroup {
    /// Highest score wins; equal scores go to the lower query id.
    pub fn winner(&self) -> ConflictMember {
        *self
            .members
            .iter()
            .reduce(|best, m| if m.score > best.score { m } else { best })
            .expect("groups have at least two members")
    }
}

fn gate_passes(members: &[ConflictMember], gate: f64, texts: &EmbeddingMatrix) -> Result<bool> {
    for m in members {
        if m.query_id >= texts.rows() {
            return Err(Error::InvalidConfig(format!(
                "no text embedding for query {}",
                m.query_id
            )));
        }
    }
    for (i, a) in members.iter().enumerate() {
        for b in &members[i + 1..] {
            if dot(texts.row(a.query_id), texts.row(b.query_id)) > gate {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

fn group_candidates(
    candidates: impl Iterator<Item = ConflictMember>,
    answers: impl Iterator<Item = usize>,
    policy: &ResolutionPolicy,
    texts: Option<&EmbeddingMatrix>,
    round: usize,
) -> Result<Vec<ConflictGroup>> {
    let mut by_answer: BTreeMap<usize, Vec<ConflictMember>> = BTreeMap::new();
    for (member, answer) in candidates.zip(answers) {
        by_answer.entry(answer).or_default().push(member);
    }
    let mut groups = Vec::new();
    for (answer_id, mut members) in by_answer {
        if members.len() < 2 {
            continue;
        }
        members.sort_by_key(|m| m.query_id);
        if let Some(gate) = policy.similarity_gate {
            let texts = texts.ok_or_else(|| {
                Error::InvalidConfig("similarity gate needs query text embeddings".into())
            })?;
            if !gate_passes(&members, gate, texts)? {
                continue;
            }
        }
        groups.push(ConflictGroup {
            answer_id,
            members,
            detected_at_round: round,
        });
    }
    Ok(groups)
}

/// Groups of at least two queries whose answer at `positions[i]` (0-based,
/// aligned with `lists`) coincides, in ascending answer id.
pub fn detect_conflicts(
    lists: &[RankedList],
    policy: &ResolutionPolicy,
    positions: &[usize],
    query_texts: Option<&EmbeddingMatrix>,
    round: usize,
) -> Result<Vec<ConflictGroup>> {
    if positions.len() != lists.len() {
        return Err(Error::DimMismatch {
            left: positions.len(),
            right: lists.len(),
        });
    }
    for (list, &p) in lists.iter().zip(positions) {
        if p >= list.len() {
            return Err(Error::PointerOutOfBounds {
                query: list.query_id,
                position: p,
                len: list.len(),
            });
        }
    }
    let hits = || lists.iter().zip(positions).map(|(l, &p)| (l.query_id, l.entries[p]));
    group_candidates(
        hits().map(|(query_id, h)| ConflictMember {
            query_id,
            score: h.score,
            rank: h.source_rank,
        }),
        hits().map(|(_, h)| h.gallery_id),
        policy,
        query_texts,
        round,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// The loser moved to the candidate at this 1-based input rank.
    Advanced { to_rank: usize },
    /// The loser had no further candidate and keeps its current entry.
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditEntry {
    /// 1-based output slot being resolved.
    pub slot: usize,
    pub round: usize,
    pub answer_id: usize,
    pub winner: usize,
    pub loser: usize,
    /// Winner score minus loser score on the contested answer.
    pub delta_s: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    /// Reordered lists, one per query in ascending query id. Entry 0 is the
    /// final assignment; the first `depth` entries are the resolved slots and
    /// the rest follow in input order. Each hit keeps its input rank in
    /// `source_rank`.
    pub lists: Vec<RankedList>,
    pub audit: Vec<AuditEntry>,
    /// Queries that lost a collision with no candidate left.
    pub unresolved: BTreeSet<usize>,
    /// Rounds executed over all slots.
    pub rounds: usize,
    /// False if some slot stopped with collisions still present.
    pub converged: bool,
}

impl Resolution {
    /// Final `(query_id, answer)` per query.
    pub fn assignments(&self) -> impl Iterator<Item = (usize, Hit)> + '_ {
        self.lists.iter().map(|l| (l.query_id, l.entries[0]))
    }

    /// Largest input rank used for a final assignment.
    pub fn max_source_rank(&self) -> usize {
        self.assignments().map(|(_, h)| h.source_rank).max().unwrap_or(0)
    }

    /// Queries that took part in at least one conflict.
    pub fn conflict_set(&self) -> BTreeSet<usize> {
        self.audit.iter().flat_map(|a| [a.winner, a.loser]).collect()
    }
}

fn slot_conflicts(
    lists: &[RankedList],
    pools: &[Vec<usize>],
    pointers: &[usize],
    policy: &ResolutionPolicy,
    texts: Option<&EmbeddingMatrix>,
    round: usize,
) -> Result<Vec<ConflictGroup>> {
    let hit = |q: usize| lists[q].entries[pools[q][pointers[q]]];
    group_candidates(
        (0..lists.len()).map(|q| ConflictMember {
            query_id: lists[q].query_id,
            score: hit(q).score,
            rank: hit(q).source_rank,
        }),
        (0..lists.len()).map(|q| hit(q).gallery_id),
        policy,
        texts,
        round,
    )
}

/// Resolves answer collisions across `lists` under `policy`.
///
/// `query_texts` supplies the text embeddings (rows indexed by query id)
/// used by the optional similarity gate.
pub fn resolve(
    lists: &[RankedList],
    policy: &ResolutionPolicy,
    query_texts: Option<&EmbeddingMatrix>,
) -> Result<Resolution> {
    if let Some(list) = lists.iter().find(|l| l.is_empty()) {
        return Err(Error::EmptyList(list.query_id));
    }
    if policy.depth == 0 {
        return Err(Error::InvalidConfig("sca depth must be >= 1".into()));
    }
    let mut lists = lists.to_vec();
    lists.sort_by_key(|l| l.query_id);
    if let Some(w) = lists.windows(2).find(|w| w[0].query_id == w[1].query_id) {
        return Err(Error::InvalidConfig(format!(
            "query {} has more than one ranked list",
            w[0].query_id
        )));
    }
    let retrieval_depth = lists.iter().map(RankedList::len).min().unwrap_or(0);
    if policy.depth > retrieval_depth {
        return Err(Error::InvalidConfig(format!(
            "sca depth {} exceeds retrieval depth {retrieval_depth}",
            policy.depth
        )));
    }
    let max_rounds = policy
        .max_rounds
        .unwrap_or_else(|| lists.iter().map(RankedList::len).max().unwrap_or(0));

    let mut placed: Vec<Vec<usize>> = vec![Vec::new(); lists.len()];
    let mut audit = Vec::new();
    let mut unresolved = BTreeSet::new();
    let mut round = 0usize;
    let mut converged = true;

    for slot in 1..=policy.depth {
        // Candidate pool: input indices not yet placed, in input order.
        let pools: Vec<Vec<usize>> = lists
            .iter()
            .zip(&placed)
            .map(|(l, used)| (0..l.len()).filter(|i| !used.contains(i)).collect())
            .collect();
        let mut pointers = vec![0usize; lists.len()];
        let mut slot_rounds = 0;
        let mut clean = false;

        while slot_rounds < max_rounds {
            let groups = slot_conflicts(&lists, &pools, &pointers, policy, query_texts, round + 1)?;
            if groups.is_empty() {
                clean = true;
                break;
            }
            round += 1;
            slot_rounds += 1;
            let mut advanced = false;
            for group in &groups {
                let winner = group.winner();
                for loser in group.members.iter().filter(|m| m.query_id != winner.query_id) {
                    let q = lists
                        .binary_search_by_key(&loser.query_id, |l| l.query_id)
                        .expect("member comes from lists");
                    let delta_s = f64::from(winner.score) - f64::from(loser.score);
                    let outcome = if pointers[q] + 1 < pools[q].len() {
                        pointers[q] += 1;
                        advanced = true;
                        Outcome::Advanced {
                            to_rank: lists[q].entries[pools[q][pointers[q]]].source_rank,
                        }
                    } else if unresolved.insert(loser.query_id) {
                        Outcome::Exhausted
                    } else {
                        continue;
                    };
                    audit.push(AuditEntry {
                        slot,
                        round,
                        answer_id: group.answer_id,
                        winner: winner.query_id,
                        loser: loser.query_id,
                        delta_s,
                        outcome,
                    });
                }
            }
            if !advanced {
                break;
            }
        }
        if !clean {
            // Either the cap was hit or only exhausted members remain.
            if !slot_conflicts(&lists, &pools, &pointers, policy, query_texts, round)?.is_empty() {
                converged = false;
            }
        }
        for (q, used) in placed.iter_mut().enumerate() {
            used.push(pools[q][pointers[q]]);
        }
    }

    let resolved = lists
        .iter()
        .zip(&placed)
        .map(|(list, used)| {
            let mut entries: Vec<Hit> = used.iter().map(|&i| list.entries[i]).collect();
            entries.extend(
                (0..list.len())
                    .filter(|i| !used.contains(i))
                    .map(|i| list.entries[i]),
            );
            RankedList {
                query_id: list.query_id,
                entries,
            }
        })
        .collect();

    Ok(Resolution {
        lists: resolved,
        audit,
        unresolved,
        rounds: round,
        converged,
    })
}

/// Writes `round answer_id winner loser delta_s` rows. Losers that could not
/// advance are recorded as `# exhausted` comment lines with the same columns.
pub fn write_audit<W: Write>(mut w: W, audit: &[AuditEntry]) -> Result<()> {
    for a in audit {
        if a.outcome == Outcome::Exhausted {
            write!(w, "# exhausted\t")?;
        }
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            a.round,
            a.answer_id,
            a.winner,
            a.loser,
            fmt_sig9(a.delta_s)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// One row of an audit file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditRow {
    pub round: usize,
    pub answer_id: usize,
    pub winner: usize,
    pub loser: usize,
    pub delta_s: f64,
    pub exhausted: bool,
}

pub fn read_audit<R: BufRead>(r: R) -> Result<Vec<AuditRow>> {
    let mut rows = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let (body, exhausted) = match line.strip_prefix("# exhausted\t") {
            Some(rest) => (rest.to_string(), true),
            None if line.starts_with('#') || line.trim().is_empty() => continue,
            None => (line, false),
        };
        let mut cols = body.split('\t');
        let lineno = idx + 1;
        rows.push(AuditRow {
            round: parse_field(cols.next(), lineno, "round")?,
            answer_id: parse_field(cols.next(), lineno, "answer_id")?,
            winner: parse_field(cols.next(), lineno, "winner")?,
            loser: parse_field(cols.next(), lineno, "loser")?,
            delta_s: parse_field(cols.next(), lineno, "delta_s")?,
            exhausted,
        });
    }
    Ok(rows)
}
