//! Cleaning and tokenizing bug text: address and path masking, stopwords,
//! synonyms and stemming.

use bugdedup::preprocess::{analyze, CleanConfig};

fn main() {
    let cfg = CleanConfig::with_sample_synonyms();
    let samples = [
        "Cannot ping 10.0.0.1 after upgrading; gateway fe80::1 also unreachable",
        "Crash reading /var/log/syslog and C:\\Users\\me\\AppData\\app.log",
        "Wi-Fi drops when MAC aa:bb:cc:dd:ee:ff reconnects at the café network",
        "The browsers were running slowly while loading pages",
    ];
    for raw in samples {
        let t = analyze(raw, &cfg);
        println!("raw:      {raw}");
        println!("cleaned:  {}", t.cleaned);
        println!("surface:  {}", t.surface.join(" "));
        println!("tokens:   {}\n", t.normalized.joined());
    }
}
