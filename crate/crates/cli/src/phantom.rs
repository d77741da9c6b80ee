use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use nalgebra::Vector3;
use tractfeat::odf::{make_phantom, save_field};
use tractfeat::PhantomSpec;

use crate::Outcome;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kind {
    Straight,
    Arc,
    Crossing,
}

#[derive(Args, Debug)]
pub struct PhantomArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Grid size, e.g. `10,10,10`.
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 10, 10])]
    dims: Vec<usize>,
    /// Isotropic voxel size in mm.
    #[arg(long, default_value_t = 1.0)]
    voxel_size: f64,
    /// Fibre axis (straight) or first slab axis (crossing): x, y, z or `a,b,c`.
    #[arg(long, default_value = "x")]
    axis: String,
    /// Second slab axis for crossing phantoms.
    #[arg(long, default_value = "y")]
    axis_b: String,
    /// Arc radius in mm.
    #[arg(long, default_value_t = 20.0)]
    radius: f64,
    #[arg(long, default_value_t = 2.0)]
    half_width: f64,
    #[arg(long, default_value_t = 2.0)]
    half_thickness: f64,
    #[arg(long, default_value_t = 1.0)]
    qa: f64,
    #[arg(long)]
    out: PathBuf,
}

pub fn parse_axis(s: &str) -> anyhow::Result<Vector3<f64>> {
    let v = match s {
        "x" => Vector3::x(),
        "y" => Vector3::y(),
        "z" => Vector3::z(),
        _ => {
            let parts: Vec<f64> = s
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("bad axis `{s}`"))?;
            if parts.len() != 3 {
                bail!("axis `{s}` needs three components");
            }
            Vector3::new(parts[0], parts[1], parts[2])
        }
    };
    let n = v.norm();
    if !(n.is_finite() && n > 0.0) {
        bail!("axis `{s}` has zero length");
    }
    Ok(v / n)
}

pub fn run(a: PhantomArgs) -> anyhow::Result<Outcome> {
    let [x, y, z] = a.dims[..] else {
        bail!("--dims needs three sizes, got {}", a.dims.len());
    };
    let dims = [x, y, z];
    let vs = [a.voxel_size; 3];
    let spec = match a.kind {
        Kind::Straight => PhantomSpec::straight(dims, vs, parse_axis(&a.axis)?, a.qa),
        Kind::Arc => PhantomSpec::arc_xy(dims, vs, a.radius, a.half_width, a.qa),
        Kind::Crossing => PhantomSpec::crossing(
            dims,
            vs,
            parse_axis(&a.axis)?,
            parse_axis(&a.axis_b)?,
            a.half_width,
            a.half_thickness,
            a.qa,
        ),
    };
    let field = make_phantom(&spec)?;
    save_field(&field, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let voxels = field.brain_mask().count_nonzero();
    let peaks: usize = (0..field.grid().len()).map(|i| field.peaks(i).len()).sum();
    println!("dims\t{}x{}x{}", dims[0], dims[1], dims[2]);
    println!("voxels_in_mask\t{voxels}");
    println!("peaks\t{peaks}");
    Ok(Outcome::default())
}
