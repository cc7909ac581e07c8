//! Computes cached Lagrangian flow windows of the level-1 field and prints
//! their volume, composition and regularity diagnostics.
use homcascade::cutoffs::calibrate_profiles;
use homcascade::field::flow::{compute_flow_window, FlowSettings};
use homcascade::field::{FieldM, FieldOptions};
use homcascade::params::{build_schedule, Mode};

fn main() -> homcascade::Result<()> {
    let s = build_schedule(1.2, 2, 2, Mode::Desk)?;
    let cut = calibrate_profiles(0.9, 1e-6)?;
    let field = FieldM::new(&s, &cut, 2, FieldOptions::default())?;
    let st = FlowSettings { with_forward: true, ..Default::default() };
    println!("window  nodes  det error   node comp.  interp comp.  bound ratio  max disp.");
    for l in 0..3 {
        let r = compute_flow_window(&field, 1, l, 32, &st)?.report;
        println!(
            "{l:>6}  {:>5}  {:.3e}  {:.3e}   {:.3e}     {:.3e}    {:.3e}",
            r.nodes, r.max_det_error, r.node_composition_error, r.composition_error, r.bound_ratio, r.max_displacement
        );
    }
    Ok(())
}
