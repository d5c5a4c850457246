/**
 * Opaque config handle. Loading resolves and checks everything the augment
 * hook will need (registry and density profile when pasting is configured),
 * so repeated augment calls fail fast and cheaply.
 */

import * as fs from "node:fs";
import * as path from "node:path";

export interface ConfigHandle {
  /** Absolute path handed to the CLI. */
  configPath: string;
  /** Parsed config JSON, for introspection. */
  config: Record<string, unknown>;
  /** Command vector used to invoke the pipeline CLI. */
  cli: string[];
}

export interface LoadConfigOptions {
  /** Override the CLI command, e.g. ["railaug"]. Defaults to the
   * RAILAUG_CLI environment variable (whitespace-split) or
   * ["python3", "-m", "railaug.cli"]. */
  cli?: string[];
}

function defaultCli(): string[] {
  const env = process.env.RAILAUG_CLI;
  if (env && env.trim().length > 0) return env.trim().split(/\s+/);
  return ["python3", "-m", "railaug.cli"];
}

export function loadConfig(configPath: string, options: LoadConfigOptions = {}): ConfigHandle {
  const abs = path.resolve(configPath);
  const config = JSON.parse(fs.readFileSync(abs, "utf-8")) as Record<string, unknown>;
  if (config["paste"] != null) {
    for (const key of ["registry", "profile"] as const) {
      const value = config[key];
      if (typeof value !== "string") {
        throw new Error(`config enables pasting but does not name a ${key} file`);
      }
      const resolved = path.resolve(path.dirname(abs), value);
      if (!fs.existsSync(resolved)) {
        throw new Error(`${key} file not found: ${resolved}`);
      }
    }
  }
  return { configPath: abs, config, cli: options.cli ?? defaultCli() };
}
