fn main() {
    let (mut config, _) = maty::corpus::load_checked("idserver");
    let opts = maty::runtime::RunOptions {
        policy: maty::runtime::SchedulerPolicy::FairQueue,
        seed: 1,
        max_steps: 10_000,
        ..Default::default()
    };
    let (trace, stop) = maty::runtime::run(&mut config, &opts);
    println!("stop={stop:?} steps={}", trace.events.len());
    println!("canonical={}", maty::runtime::canonical_idle_check(&config));
    for (a, node) in &config.actors {
        if let maty::runtime::ThreadState::Idle(v) = &node.thread {
            println!("{}: {:?}", config.actor_display(*a), v.kind);
        }
    }
    let responses = trace.events.iter().filter(|e| e.rule == "ESend" && e.detail.starts_with("IDResponse")).count();
    println!("IDResponse sends: {responses}");
}
