/* tslint:disable */
/* eslint-disable */

/**
 * A template and the print the simulated channel produced from it.
 */
export class Simulation {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Hamming distance between the template and the print binarized at 0.5.
     */
    hamming(): number;
    mse(): number;
    print_pixels(): Uint8Array;
    side(): number;
    /**
     * SSIM with an 11-pixel window, or a smaller odd window on small images.
     */
    ssim(): number;
    /**
     * Template pixels as 8-bit gray, row-major.
     */
    template_pixels(): Uint8Array;
}

/**
 * Parses and validates a model config written in TOML; returns "valid" plus the objective, or every issue.
 */
export function check_config(text: string): string;

/**
 * The weighted terms of a named preset's objective, one line per path.
 */
export function preset_objective(name: string): string;

/**
 * Draws a random template and passes it through the channel.
 */
export function simulate(side: number, density: number, blur_sigma: number, dot_gain: number, gamma: number, noise_sigma: number, seed: number): Simulation;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_simulation_free: (a: number, b: number) => void;
    readonly check_config: (a: number, b: number) => [number, number];
    readonly preset_objective: (a: number, b: number) => [number, number, number, number];
    readonly simulate: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly simulation_hamming: (a: number) => number;
    readonly simulation_mse: (a: number) => number;
    readonly simulation_print_pixels: (a: number) => [number, number];
    readonly simulation_side: (a: number) => number;
    readonly simulation_ssim: (a: number) => number;
    readonly simulation_template_pixels: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
