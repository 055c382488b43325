//! Quasi-static settling: blocks fall to rest on the platform or on blocks
//! below them, with a ≥50%-footprint support rule.
//!
//! The rules, in descent order for one falling block:
//! * Any settled block whose body intersects the faller's body is an
//!   obstacle; the faller slides sideways off its footprint (toward its own
//!   overhang) and keeps falling.
//! * Tops of settled non-triangle blocks, grouped by exact height, form
//!   support levels. If the faller's footprint overlaps a level's merged
//!   interval by at least half its width it rests there; a smaller but
//!   nonzero overlap tips it off the side instead.
//! * Triangle tops never support anything: any overlap with a triangle's
//!   apex level forces a slide.
//! * The platform catches everything else.
//!
//! Settling processes blocks bottom-up (ties by index), which resolves
//! toppling chains in one deterministic pass and makes the operation
//! idempotent on already-settled scenes.

use super::block::{Block, BlockShape, Scene, WorldCfg};

const SUPPORT_FRACTION: f64 = 0.5;
const EPS: f64 = 1e-9;
const MAX_SLIDES: usize = 64;

/// Clamps a block into world bounds (applied before settling).
pub fn clamp_to_world(block: &Block, world: &WorldCfg) -> Block {
    let mut b = *block;
    let hw = b.width() / 2.0;
    b.x = b.x.clamp(hw, world.width - hw);
    b.y = b.y.clamp(world.platform_top, (world.height - b.height()).max(world.platform_top));
    b
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    fn overlap(&self, lo: f64, hi: f64) -> f64 {
        (self.hi.min(hi) - self.lo.max(lo)).max(0.0)
    }
}

/// Merges intervals sharing any point into maximal components.
fn merge_intervals(mut parts: Vec<Interval>) -> Vec<Interval> {
    parts.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut out: Vec<Interval> = Vec::with_capacity(parts.len());
    for p in parts {
        match out.last_mut() {
            Some(last) if p.lo <= last.hi + EPS => last.hi = last.hi.max(p.hi),
            _ => out.push(p),
        }
    }
    out
}

/// The merged component a footprint overlaps the most, if any.
fn best_component(components: &[Interval], lo: f64, hi: f64) -> Option<Interval> {
    let mut best: Option<(f64, Interval)> = None;
    for c in components {
        let ov = c.overlap(lo, hi);
        if ov > EPS && best.map(|(b, _)| ov > b).unwrap_or(true) {
            best = Some((ov, *c));
        }
    }
    best.map(|(_, c)| c)
}

/// Slides the block center horizontally to sit just past an interval, toward
/// the side where the block already overhangs more (ties go right). Falls
/// back to the opposite side when the preferred one is pinned at a wall.
fn slide_off(x: f64, half_width: f64, component: Interval, world: &WorldCfg) -> f64 {
    let center = (component.lo + component.hi) / 2.0;
    let clamp = |t: f64| t.clamp(half_width, world.width - half_width);
    let (first, second) = if x < center {
        (component.lo - half_width, component.hi + half_width)
    } else {
        (component.hi + half_width, component.lo - half_width)
    };
    let preferred = clamp(first);
    if (preferred - x).abs() > EPS {
        preferred
    } else {
        clamp(second)
    }
}

/// Rest height for a straight drop at the candidate's column: the highest
/// level at or below `y_start` holding at least half the footprint, else the
/// platform. Returns `None` when the resting body would clip any settled
/// block (including triangle roofs), i.e. the column is not actually open.
fn straight_drop_rest(cand: &Block, y_start: f64, settled: &[Block], world: &WorldCfg) -> Option<f64> {
    let mut heights: Vec<f64> = settled
        .iter()
        .filter(|o| {
            o.shape != BlockShape::Triangle && o.overlap_x(cand) > EPS && o.top() <= y_start + EPS
        })
        .map(|o| o.top())
        .collect();
    heights.sort_by(|a, c| c.total_cmp(a));
    heights.dedup_by(|a, c| (*a - *c).abs() < EPS);

    let mut rest = world.platform_top;
    for level in heights {
        let solid: Vec<Interval> = settled
            .iter()
            .filter(|o| {
                o.shape != BlockShape::Triangle && (o.top() - level).abs() < EPS
            })
            .map(|o| Interval { lo: o.left(), hi: o.right() })
            .collect();
        let support: f64 = merge_intervals(solid)
            .iter()
            .map(|c| c.overlap(cand.left(), cand.right()))
            .sum();
        if support / cand.width() >= SUPPORT_FRACTION - EPS {
            rest = level;
            break;
        }
    }

    let h = cand.height();
    let clear = !settled.iter().any(|o| {
        o.overlap_x(cand) > EPS && o.y < rest + h - EPS && o.top() > rest + EPS
    });
    clear.then_some(rest)
}

/// True when a block already satisfies the resting criterion against the
/// given blocks: its body clips nothing and its bottom sits exactly on the
/// highest surface below it (or the platform). Settling leaves such blocks
/// untouched, which keeps the operation an exact fixed point even for poses
/// only reachable through the packed-world escape hatch below.
fn at_rest(b: &Block, others: &[Block], world: &WorldCfg) -> bool {
    let mut support = world.platform_top;
    for o in others {
        if o.overlap_x(b) <= EPS {
            continue;
        }
        if o.y < b.top() - EPS && o.top() > b.y + EPS {
            return false; // body intersection
        }
        if o.top() <= b.y + EPS {
            support = support.max(o.top());
        }
    }
    (b.y - support).abs() < EPS
}

/// Last-resort placement when sliding cannot make progress: scan columns
/// outward from `x0`, first for the nearest open straight drop, then — in
/// worlds so cluttered that no properly supported pose exists — for the
/// nearest column where the block can sit on top of whatever is below it.
/// Accepted poses satisfy [`at_rest`], so settling stays idempotent.
fn scan_columns(b: &Block, x0: f64, y_limit: f64, settled: &[Block], world: &WorldCfg) -> Block {
    let hw = b.width() / 2.0;
    let columns = (2.0 * world.width / 0.25) as usize + 1;
    let offsets = (0..columns).map(|step| {
        0.25 * ((step + 1) / 2) as f64 * if step % 2 == 0 { 1.0 } else { -1.0 }
    });

    for dx in offsets.clone() {
        let mut cand = *b;
        cand.x = (x0 + dx).clamp(hw, world.width - hw);
        if let Some(rest) = straight_drop_rest(&cand, y_limit, settled, world) {
            cand.y = rest;
            return cand;
        }
    }
    // No properly supported pose exists anywhere (a wedge: the block is
    // wider than every open gap). Rest on top of whatever is below, choosing
    // the lowest such perch; this keeps scenes overlap-free at the cost of
    // lifting the block when it was released inside the clutter.
    let mut best: Option<Block> = None;
    for dx in offsets {
        let mut cand = *b;
        cand.x = (x0 + dx).clamp(hw, world.width - hw);
        let rest = settled
            .iter()
            .filter(|o| o.overlap_x(&cand) > EPS)
            .map(|o| o.top())
            .fold(world.platform_top, f64::max);
        cand.y = rest;
        if rest <= y_limit + EPS {
            return cand;
        }
        if best.map(|p| rest < p.y).unwrap_or(true) {
            best = Some(cand);
        }
    }
    best.unwrap_or(*b)
}

/// Drops one block against already-settled blocks; returns its rest pose.
fn drop_block(block: &Block, settled: &[Block], world: &WorldCfg) -> Block {
    let mut b = clamp_to_world(block, world);
    let hw = b.width() / 2.0;
    let h = b.height();
    // Gravity bound: the block may never end up above its (clamped) drop pose.
    let y_limit = b.y;

    for _ in 0..MAX_SLIDES {
        // Bodies intersecting ours block the fall; slide off the highest one.
        let obstacle = settled
            .iter()
            .filter(|o| {
                o.overlap_x(&b) > EPS && o.y < b.y + h - EPS && o.top() > b.y + EPS
            })
            .max_by(|a, c| a.top().total_cmp(&c.top()));
        if let Some(ob) = obstacle {
            let nx = slide_off(b.x, hw, Interval { lo: ob.left(), hi: ob.right() }, world);
            if (nx - b.x).abs() < EPS {
                return scan_columns(&b, b.x, y_limit, settled, world);
            }
            b.x = nx;
            continue;
        }

        // Support levels at or below the current bottom, highest first.
        let mut heights: Vec<f64> = settled
            .iter()
            .filter(|o| o.overlap_x(&b) > EPS && o.top() <= b.y + EPS)
            .map(|o| o.top())
            .collect();
        heights.sort_by(|a, c| c.total_cmp(a));
        heights.dedup_by(|a, c| (*a - *c).abs() < EPS);

        let mut outcome = None;
        for level in heights {
            let at_level = |o: &&Block| (o.top() - level).abs() < EPS && o.overlap_x(&b) > EPS;
            let solid: Vec<Interval> = settled
                .iter()
                .filter(at_level)
                .filter(|o| o.shape != BlockShape::Triangle)
                .map(|o| Interval { lo: o.left(), hi: o.right() })
                .collect();
            let apexes: Vec<Interval> = settled
                .iter()
                .filter(at_level)
                .filter(|o| o.shape == BlockShape::Triangle)
                .map(|o| Interval { lo: o.left(), hi: o.right() })
                .collect();

            let solid = merge_intervals(solid);
            let support: f64 = solid.iter().map(|c| c.overlap(b.left(), b.right())).sum();
            let apex_touch: f64 = apexes.iter().map(|c| c.overlap(b.left(), b.right())).sum();

            if support / b.width() >= SUPPORT_FRACTION - EPS {
                outcome = Some(Ok(level));
                break;
            }
            if support > EPS || apex_touch > EPS {
                // Insufficient support (or a roof apex): tip off sideways.
                let all: Vec<Interval> = solid.into_iter().chain(apexes).collect();
                let component = best_component(&merge_intervals(all), b.left(), b.right())
                    .expect("overlapping component exists");
                outcome = Some(Err((level, component)));
                break;
            }
        }
        match outcome {
            Some(Ok(level)) => {
                b.y = level;
                return b;
            }
            Some(Err((level, component))) => {
                b.y = level;
                let nx = slide_off(b.x, hw, component, world);
                if (nx - b.x).abs() < EPS {
                    return scan_columns(&b, b.x, y_limit, settled, world);
                }
                b.x = nx;
            }
            None => {
                b.y = world.platform_top;
                return b;
            }
        }
    }

    // Slide budget exhausted (obstacles and apexes can ping-pong a block
    // between columns forever in contrived stacks).
    scan_columns(&b, b.x, y_limit, settled, world)
}

/// Settles every block to quasi-static equilibrium. Deterministic, and a
/// fixed point: `settle(settle(s)) == settle(s)` exactly.
pub fn settle(scene: &Scene) -> Scene {
    let world = scene.world;
    let mut order: Vec<usize> = (0..scene.blocks.len()).collect();
    order.sort_by(|&a, &b| {
        scene.blocks[a]
            .y
            .total_cmp(&scene.blocks[b].y)
            .then(a.cmp(&b))
    });
    let mut result = scene.blocks.clone();
    let mut placed: Vec<Block> = Vec::with_capacity(result.len());
    for idx in order {
        let block = scene.blocks[idx];
        let rest = if at_rest(&block, &placed, &world) {
            block
        } else {
            drop_block(&block, &placed, &world)
        };
        result[idx] = rest;
        placed.push(rest);
    }
    Scene {
        blocks: result,
        world,
    }
}
