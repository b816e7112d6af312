fn main() -> std::process::ExitCode {
    stu_core::cli::main()
}
