#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() {
    std::process::exit(sonoloc::harness::cli::main(std::env::args_os()));
}
