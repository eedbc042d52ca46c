fn main() {
    std::process::exit(sbd_lab::cli::run(std::env::args_os()));
}
