use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MemoryRequest, MergeTreeSpec, StreamKind, TrafficError};
use crate::addressing::{PageId, PhysicalAddress, DEFAULT_PAGE_OFFSET_BITS, LINE_BYTES};

/// Lines in one 4 KiB page.
pub const LINES_PER_PAGE: u32 = (1 << DEFAULT_PAGE_OFFSET_BITS) / LINE_BYTES as u32;

/// Order in which a source walks the lines of one page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IntraPageOrder {
    #[default]
    Sequential,
    /// Column-major walk with the given line stride: 0, s, 2s, ..., 1, 1+s, ...
    Strided(u32),
    /// Independent permutation per page, from the given seed.
    Shuffled(u64),
}

/// How sources of one workload are assigned to regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Leaf `i` takes region slot `i`.
    #[default]
    Ordered,
    /// Region slots are a seeded permutation of the leaves.
    Shuffled,
}

/// Per-source access pattern for one stream.
///
/// A source walks `pages_per_source` pages, `page_stride` apart. Up to
/// `pages_in_flight` pages are live at once; the source visits them in
/// round-robin order, `requests_per_visit` requests at a time, and admits at
/// most one new page per round. Each page receives `requests_per_page`
/// requests in total, wrapping around the line order when that exceeds the
/// 64 lines of a page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub stream_kind: StreamKind,
    pub read_fraction: f64,
    pub base_page: PageId,
    pub pages_per_source: u64,
    pub requests_per_page: u32,
    #[serde(default = "one")]
    pub page_stride: u64,
    #[serde(default)]
    pub intra_page_order: IntraPageOrder,
    #[serde(default = "one_u32")]
    pub pages_in_flight: u32,
    #[serde(default = "default_visit")]
    pub requests_per_visit: u32,
    /// Pages between consecutive sources' regions. Defaults to the source
    /// footprint. Any slack is filled with a seeded per-source offset.
    /// A spacing below `page_stride` interleaves the sources page by page,
    /// like tiles of one shared surface.
    #[serde(default)]
    pub source_spacing: Option<u64>,
    #[serde(default)]
    pub allow_overlap: bool,
    #[serde(default)]
    pub placement: Placement,
}

fn one() -> u64 {
    1
}

fn one_u32() -> u32 {
    1
}

fn default_visit() -> u32 {
    8
}

impl StreamSpec {
    /// A single-page-at-a-time sequential stream.
    pub fn simple(stream_kind: StreamKind, read_fraction: f64, base_page: u64, pages_per_source: u64) -> Self {
        StreamSpec {
            stream_kind,
            read_fraction,
            base_page: PageId(base_page),
            pages_per_source,
            requests_per_page: LINES_PER_PAGE,
            page_stride: 1,
            intra_page_order: IntraPageOrder::Sequential,
            pages_in_flight: 1,
            requests_per_visit: LINES_PER_PAGE,
            source_spacing: None,
            allow_overlap: false,
            placement: Placement::Ordered,
        }
    }

    /// Pages covered by one source.
    pub fn footprint(&self) -> u64 {
        self.pages_per_source.saturating_mul(self.page_stride)
    }

    pub fn spacing(&self) -> u64 {
        self.source_spacing.unwrap_or_else(|| self.footprint())
    }

    /// One past the highest page any of `sources` sources can touch.
    pub fn page_limit(&self, sources: u32) -> u64 {
        self.base_page.0 + self.spacing() * sources as u64 + self.footprint().max(self.spacing())
    }

    /// Sources take every `page_stride`-th page, offset by their spacing.
    pub fn interleaved(&self) -> bool {
        self.page_stride > 1 && self.spacing() < self.page_stride
    }

    pub fn total_requests(&self) -> u64 {
        self.pages_per_source * self.requests_per_page as u64
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |m: &str| Err(TrafficError::InvalidStream(m.to_string()));
        if !(0.0..=1.0).contains(&self.read_fraction) {
            return bad("read_fraction must lie in [0, 1]");
        }
        if self.requests_per_page < 1 {
            return bad("requests_per_page must be >= 1");
        }
        if self.page_stride < 1 {
            return bad("page_stride must be >= 1");
        }
        if self.pages_in_flight < 1 {
            return bad("pages_in_flight must be >= 1");
        }
        if self.requests_per_visit < 1 {
            return bad("requests_per_visit must be >= 1");
        }
        if let IntraPageOrder::Strided(0) = self.intra_page_order {
            return bad("strided intra_page_order needs a stride >= 1");
        }
        let (spacing, span) = (self.spacing(), self.footprint());
        if spacing < span && !self.allow_overlap && !self.interleaved() {
            return Err(TrafficError::OverlappingSources { spacing, span });
        }
        Ok(())
    }

    /// [`validate`](Self::validate), plus disjointness of `sources`
    /// interleaved sources.
    pub fn validate_sources(&self, sources: u32) -> Result<(), TrafficError> {
        self.validate()?;
        let (spacing, stride) = (self.spacing(), self.page_stride);
        if self.interleaved() && !self.allow_overlap && (sources.max(1) as u64 - 1) * spacing >= stride {
            return Err(TrafficError::InterleaveOverlap { sources, spacing, stride });
        }
        Ok(())
    }
}

fn line_order(order: IntraPageOrder, rng: Option<&mut ChaCha8Rng>) -> Vec<u32> {
    match order {
        IntraPageOrder::Sequential => (0..LINES_PER_PAGE).collect(),
        IntraPageOrder::Strided(stride) => {
            let stride = stride.min(LINES_PER_PAGE);
            (0..stride).flat_map(|start| (start..LINES_PER_PAGE).step_by(stride as usize)).collect()
        }
        IntraPageOrder::Shuffled(_) => {
            let mut lines: Vec<u32> = (0..LINES_PER_PAGE).collect();
            lines.shuffle(rng.expect("shuffled order needs an rng"));
            lines
        }
    }
}

struct LivePage {
    base: u64,
    emitted: u32,
    order: Vec<u32>,
}

fn source_rng(seed: u64, source_id: u32, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.rotate_left(17));
    rng.set_stream(source_id as u64);
    rng
}

/// Generate the request list of one source. `seq` numbers are local to the
/// source; they are reassigned by [`merge`](super::merge).
pub fn generate_source(spec: &StreamSpec, source_id: u32, seed: u64) -> Result<Vec<MemoryRequest>, TrafficError> {
    spec.validate()?;
    generate_at(spec, source_id, source_id, seed)
}

fn generate_at(spec: &StreamSpec, source_id: u32, slot: u32, seed: u64) -> Result<Vec<MemoryRequest>, TrafficError> {
    let mut rw_rng = source_rng(seed, source_id, 0x5157);
    let mut shuffle_rng = match spec.intra_page_order {
        IntraPageOrder::Shuffled(s) => Some(source_rng(s, source_id, 0x5eed)),
        _ => None,
    };

    let slack = spec.spacing().saturating_sub(spec.footprint());
    let jitter = if slack > 0 { rw_rng.gen_range(0..=slack) } else { 0 };
    let region = spec.base_page.0 + slot as u64 * spec.spacing() + jitter;

    let fixed_order = match spec.intra_page_order {
        IntraPageOrder::Shuffled(_) => None,
        order => Some(line_order(order, None)),
    };

    let mut out = Vec::with_capacity(spec.total_requests() as usize);
    let mut live: VecDeque<LivePage> = VecDeque::with_capacity(spec.pages_in_flight as usize);
    let mut next_page = 0u64;
    loop {
        if live.len() < spec.pages_in_flight as usize && next_page < spec.pages_per_source {
            let page = region + next_page * spec.page_stride;
            let order = match &fixed_order {
                Some(o) => o.clone(),
                None => line_order(spec.intra_page_order, shuffle_rng.as_mut()),
            };
            live.push_back(LivePage { base: page << DEFAULT_PAGE_OFFSET_BITS, emitted: 0, order });
            next_page += 1;
        }
        if live.is_empty() {
            break;
        }
        for lp in live.iter_mut() {
            let burst = spec.requests_per_visit.min(spec.requests_per_page - lp.emitted);
            for _ in 0..burst {
                let line = lp.order[(lp.emitted % LINES_PER_PAGE) as usize] as u64;
                let is_write = rw_rng.gen::<f64>() >= spec.read_fraction;
                out.push(MemoryRequest {
                    seq: out.len() as u64,
                    addr: PhysicalAddress(lp.base + line * LINE_BYTES),
                    is_write,
                    stream_kind: spec.stream_kind,
                    source_id,
                });
                lp.emitted += 1;
            }
        }
        live.retain(|lp| lp.emitted < spec.requests_per_page);
    }
    Ok(out)
}

/// Generate every leaf of `tree`. Leaf `i` runs `streams[i % streams.len()]`
/// from region slot `i`, or from a seeded permutation of slots for streams
/// with [`Placement::Shuffled`].
pub fn generate_workload(
    streams: &[StreamSpec],
    tree: &MergeTreeSpec,
    seed: u64,
) -> Result<Vec<Vec<MemoryRequest>>, TrafficError> {
    if streams.is_empty() {
        return Err(TrafficError::InvalidStream("workload has no streams".into()));
    }
    tree.validate()?;
    for s in streams {
        s.validate_sources(tree.leaves)?;
    }
    let mut slots: Vec<u32> = (0..tree.leaves).collect();
    slots.shuffle(&mut source_rng(seed, u32::MAX, 0x51075));
    (0..tree.leaves)
        .map(|leaf| {
            let spec = &streams[leaf as usize % streams.len()];
            let slot = if spec.placement == Placement::Shuffled { slots[leaf as usize] } else { leaf };
            generate_at(spec, leaf, slot, seed)
        })
        .collect()
}
