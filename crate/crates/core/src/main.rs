fn main() {
    if let Some(n) = std::env::var("FLOWPOSE_THREADS")
        .ok()
        .and_then(|s| s.parse().ok())
    {
        flowpose::exec::init_thread_pool(n);
    }
    std::process::exit(flowpose::cli::cli_main(std::env::args_os().collect()));
}
