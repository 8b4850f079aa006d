/* tslint:disable */
/* eslint-disable */

/**
 * Bank of freshly initialized task vectors and the composed vector for
 * `task_bits`.
 */
export function activation(strategy: string, task_bits: number, dim: number, seed: number): string;

/**
 * Generate utterance `seed` of the default corpus and encode it with the
 * auxiliary tasks in `task_bits` (bit 1 scd, 2 ep, 3 ner, 4 lid).
 */
export function encode_utterance(seed: number, task_bits: number): string;

/**
 * Random `frames x (labels + 1)` lattice over `width` symbols: forward
 * variables, loss and, when small enough, the enumerated loss.
 */
export function lattice(frames: number, labels: number, width: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly activation: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly encode_utterance: (a: number, b: number) => [number, number];
    readonly lattice: (a: number, b: number, c: number, d: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
