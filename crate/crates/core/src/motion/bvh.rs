//! BVH (Biovision Hierarchy) parsing, serialization and forward kinematics.
//!
//! Euler rotations compose in the channel order as written per joint,
//! intrinsically, right-handed, in whatever up-axis the file was authored
//! with. Rotations are degrees on disk, offsets and positions meters.

use std::fmt::Write as _;

use nalgebra::{UnitQuaternion, Vector3};

use super::MotionError;

/// One of the six BVH channel keywords.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl Channel {
    fn parse(s: &str) -> Option<Channel> {
        Some(match s {
            "Xposition" => Channel::Xposition,
            "Yposition" => Channel::Yposition,
            "Zposition" => Channel::Zposition,
            "Xrotation" => Channel::Xrotation,
            "Yrotation" => Channel::Yrotation,
            "Zrotation" => Channel::Zrotation,
            _ => return None,
        })
    }

    fn keyword(self) -> &'static str {
        match self {
            Channel::Xposition => "Xposition",
            Channel::Yposition => "Yposition",
            Channel::Zposition => "Zposition",
            Channel::Xrotation => "Xrotation",
            Channel::Yrotation => "Yrotation",
            Channel::Zrotation => "Zrotation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    /// Index of the parent joint; `None` exactly for the root.
    pub parent: Option<usize>,
    /// Rest offset from the parent, meters.
    pub offset: Vector3<f64>,
    pub channels: Vec<Channel>,
    /// True for `End Site` leaves, which carry no channels.
    pub end_site: bool,
}

/// Parsed BVH document: joint hierarchy plus per-frame channel rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonAnimation {
    /// Joints in declaration order; every parent precedes its children.
    pub joints: Vec<Joint>,
    /// Seconds per frame.
    pub frame_time: f64,
    /// One row per frame; row length equals the total channel count.
    pub frames: Vec<Vec<f64>>,
}

impl SkeletonAnimation {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn channel_count(&self) -> usize {
        self.joints.iter().map(|j| j.channels.len()).sum()
    }
}

/// Global pose of one joint at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

struct Tokens {
    items: Vec<(usize, String)>,
    pos: usize,
}

impl Tokens {
    fn new(text: &str) -> Tokens {
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            for tok in line.split_whitespace() {
                items.push((i + 1, tok.to_string()));
            }
        }
        Tokens { items, pos: 0 }
    }

    fn peek(&self) -> Option<&(usize, String)> {
        self.items.get(self.pos)
    }

    fn next(&mut self) -> Result<(usize, &str), MotionError> {
        let item = self
            .items
            .get(self.pos)
            .ok_or_else(|| MotionError::parse(self.last_line(), "unexpected end of input"))?;
        self.pos += 1;
        Ok((item.0, item.1.as_str()))
    }

    fn expect(&mut self, kw: &str) -> Result<(), MotionError> {
        let (line, tok) = self.next()?;
        if tok != kw {
            return Err(MotionError::parse(line, format!("expected `{kw}`, found `{tok}`")));
        }
        Ok(())
    }

    fn number(&mut self, what: &str) -> Result<f64, MotionError> {
        let (line, tok) = self.next()?;
        tok.parse::<f64>()
            .map_err(|_| MotionError::parse(line, format!("expected {what}, found `{tok}`")))
    }

    fn integer(&mut self, what: &str) -> Result<usize, MotionError> {
        let (line, tok) = self.next()?;
        tok.parse::<usize>()
            .map_err(|_| MotionError::parse(line, format!("expected {what}, found `{tok}`")))
    }

    fn last_line(&self) -> usize {
        self.items.last().map(|(l, _)| *l).unwrap_or(0)
    }
}

/// Parses a complete BVH document.
pub fn parse_bvh(text: &str) -> Result<SkeletonAnimation, MotionError> {
    let mut toks = Tokens::new(text);
    toks.expect("HIERARCHY")?;

    let (line, kw) = toks.next()?;
    if kw != "ROOT" {
        return Err(MotionError::parse(line, format!("expected `ROOT`, found `{kw}`")));
    }
    let mut joints = Vec::new();
    parse_joint(&mut toks, None, &mut joints)?;

    if let Some((line, tok)) = toks.peek().cloned() {
        if tok == "ROOT" {
            return Err(MotionError::parse(line, "multiple ROOT joints are not allowed"));
        }
    }

    toks.expect("MOTION")?;
    toks.expect("Frames:")?;
    let frame_count = toks.integer("frame count")?;
    let (line, ft_kw) = toks.next()?;
    if ft_kw != "Frame" {
        return Err(MotionError::parse(line, format!("expected `Frame Time:`, found `{ft_kw}`")));
    }
    toks.expect("Time:")?;
    let frame_time = toks.number("frame time")?;
    if !(frame_time > 0.0) {
        return Err(MotionError::parse(line, format!("frame time must be positive, got {frame_time}")));
    }

    let channels: usize = joints.iter().map(|j| j.channels.len()).sum();
    let mut frames = Vec::with_capacity(frame_count);
    for _ in 0..frame_count {
        let mut row = Vec::with_capacity(channels);
        for _ in 0..channels {
            row.push(toks.number("frame value")?);
        }
        frames.push(row);
    }
    if let Some((line, tok)) = toks.peek() {
        return Err(MotionError::parse(
            *line,
            format!("trailing data after {frame_count} frames of {channels} channels: `{tok}`"),
        ));
    }

    Ok(SkeletonAnimation { joints, frame_time, frames })
}

fn parse_joint(
    toks: &mut Tokens,
    parent: Option<usize>,
    joints: &mut Vec<Joint>,
) -> Result<(), MotionError> {
    // Caller has consumed the ROOT/JOINT keyword; next token is the name.
    let (_, name) = toks.next()?;
    let name = name.to_string();
    toks.expect("{")?;
    toks.expect("OFFSET")?;
    let offset = Vector3::new(
        toks.number("offset x")?,
        toks.number("offset y")?,
        toks.number("offset z")?,
    );
    let (line, kw) = toks.next()?;
    if kw != "CHANNELS" {
        return Err(MotionError::parse(line, format!("expected `CHANNELS`, found `{kw}`")));
    }
    let n = toks.integer("channel count")?;
    let mut channels = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, tok) = toks.next()?;
        let ch = Channel::parse(tok)
            .ok_or_else(|| MotionError::parse(line, format!("unknown channel keyword `{tok}`")))?;
        channels.push(ch);
    }

    let index = joints.len();
    joints.push(Joint { name, parent, offset, channels, end_site: false });

    loop {
        let (line, kw) = toks.next()?;
        match kw {
            "JOINT" => parse_joint(toks, Some(index), joints)?,
            "End" => {
                toks.expect("Site")?;
                toks.expect("{")?;
                toks.expect("OFFSET")?;
                let offset = Vector3::new(
                    toks.number("offset x")?,
                    toks.number("offset y")?,
                    toks.number("offset z")?,
                );
                toks.expect("}")?;
                let parent_name = joints[index].name.clone();
                joints.push(Joint {
                    name: format!("{parent_name}_end"),
                    parent: Some(index),
                    offset,
                    channels: Vec::new(),
                    end_site: true,
                });
            }
            "}" => return Ok(()),
            other => {
                return Err(MotionError::parse(
                    line,
                    format!("expected `JOINT`, `End Site` or `}}`, found `{other}`"),
                ))
            }
        }
    }
}

/// Serializes back to BVH text. `parse_bvh(serialize_bvh(a)) == a`.
pub fn serialize_bvh(anim: &SkeletonAnimation) -> String {
    let mut out = String::from("HIERARCHY\n");
    let children: Vec<Vec<usize>> = child_table(anim);
    if !anim.joints.is_empty() {
        write_joint(anim, &children, 0, 0, &mut out);
    }
    out.push_str("MOTION\n");
    let _ = writeln!(out, "Frames: {}", anim.frames.len());
    let _ = writeln!(out, "Frame Time: {}", anim.frame_time);
    for row in &anim.frames {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", cells.join(" "));
    }
    out
}

fn child_table(anim: &SkeletonAnimation) -> Vec<Vec<usize>> {
    let mut children = vec![Vec::new(); anim.joints.len()];
    for (i, j) in anim.joints.iter().enumerate() {
        if let Some(p) = j.parent {
            children[p].push(i);
        }
    }
    children
}

fn write_joint(
    anim: &SkeletonAnimation,
    children: &[Vec<usize>],
    index: usize,
    depth: usize,
    out: &mut String,
) {
    let joint = &anim.joints[index];
    let pad = "  ".repeat(depth);
    if joint.end_site {
        let _ = writeln!(out, "{pad}End Site");
        let _ = writeln!(out, "{pad}{{");
        let _ = writeln!(
            out,
            "{pad}  OFFSET {} {} {}",
            joint.offset.x, joint.offset.y, joint.offset.z
        );
        let _ = writeln!(out, "{pad}}}");
        return;
    }
    let kw = if joint.parent.is_none() { "ROOT" } else { "JOINT" };
    let _ = writeln!(out, "{pad}{kw} {}", joint.name);
    let _ = writeln!(out, "{pad}{{");
    let _ = writeln!(
        out,
        "{pad}  OFFSET {} {} {}",
        joint.offset.x, joint.offset.y, joint.offset.z
    );
    let chs: Vec<&str> = joint.channels.iter().map(|c| c.keyword()).collect();
    let _ = writeln!(out, "{pad}  CHANNELS {} {}", chs.len(), chs.join(" "));
    for &c in &children[index] {
        write_joint(anim, children, c, depth + 1, out);
    }
    let _ = writeln!(out, "{pad}}}");
}

/// Evaluates the global pose of every joint at one frame: root translation
/// plus recursive composition of channel rotations in declared order.
pub fn forward_kinematics(
    anim: &SkeletonAnimation,
    frame: usize,
) -> Result<Vec<JointPose>, MotionError> {
    let row = anim.frames.get(frame).ok_or_else(|| {
        MotionError::Invariant(format!(
            "frame index {frame} out of range ({} frames)",
            anim.frames.len()
        ))
    })?;
    if row.len() != anim.channel_count() {
        return Err(MotionError::Invariant(format!(
            "frame {frame} has {} values but {} channels declared",
            row.len(),
            anim.channel_count()
        )));
    }

    let mut poses: Vec<JointPose> = Vec::with_capacity(anim.joints.len());
    let mut cursor = 0usize;
    for joint in &anim.joints {
        let mut translation = joint.offset;
        let mut rotation = UnitQuaternion::identity();
        for &ch in &joint.channels {
            let value = row[cursor];
            cursor += 1;
            match ch {
                Channel::Xposition => translation.x += value,
                Channel::Yposition => translation.y += value,
                Channel::Zposition => translation.z += value,
                Channel::Xrotation => {
                    rotation *= UnitQuaternion::from_axis_angle(&Vector3::x_axis(), value.to_radians())
                }
                Channel::Yrotation => {
                    rotation *= UnitQuaternion::from_axis_angle(&Vector3::y_axis(), value.to_radians())
                }
                Channel::Zrotation => {
                    rotation *= UnitQuaternion::from_axis_angle(&Vector3::z_axis(), value.to_radians())
                }
            }
        }
        let pose = match joint.parent {
            None => JointPose { position: translation, orientation: rotation },
            Some(p) => {
                let parent = &poses[p];
                JointPose {
                    position: parent.position + parent.orientation * translation,
                    orientation: parent.orientation * rotation,
                }
            }
        };
        poses.push(pose);
    }
    Ok(poses)
}
