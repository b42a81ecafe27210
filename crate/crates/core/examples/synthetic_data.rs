//! Writes a few images of each synthetic domain pair to disk.

use monopix::data::io::write_png;
use monopix::data::{synth_generate, DomainPairSpec, DomainTask};
use monopix::model::ImageBatch;

fn main() -> monopix::Result<()> {
    let out = std::path::Path::new("runs/synthetic");
    let specs = [
        ("brightness", DomainPairSpec::brightness(0.3, 1.0, 64, 8, 0)),
        ("noise", DomainPairSpec { task: DomainTask::Noise { x_sigma: 0.0, y_sigma: 0.2 }, ..DomainPairSpec::brightness(1.0, 1.0, 64, 8, 0) }),
    ];
    for (name, spec) in specs {
        let pair = synth_generate(&spec)?;
        for (domain, set) in [("x", &pair.train_x), ("y", &pair.train_y)] {
            let dir = out.join(name).join(domain);
            std::fs::create_dir_all(&dir)?;
            for (i, t) in set.items().iter().take(4).enumerate() {
                write_png(&dir.join(format!("{i}.png")), &ImageBatch::new(t.clone())?, 0)?;
            }
        }
        println!("wrote {}", out.join(name).display());
    }
    Ok(())
}
