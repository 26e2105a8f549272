use speech2image::dataset::*;

fn main() {
    let classes = make_classes(16, 1).unwrap();
    let mut fails = 0;
    for c in &classes {
        for seed in [1u64, 2, 3] {
            let img = render_image(c, seed, 64);
            let p = attribute_probe(&img);
            if p.shape != c.shape || p.fill != c.fill || p.accent != c.accent {
                fails += 1;
                println!(
                    "class {}: truth ({:?},{},{}) probe ({:?},{},{}) seed {seed}",
                    c.class_id, c.shape, c.fill, c.accent, p.shape, p.fill, p.accent
                );
            }
        }
    }
    println!("fails: {fails}");
}
