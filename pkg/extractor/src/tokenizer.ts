/**
 * Word-level tokenizer over a small fixed vocabulary.
 *
 * Token texts carry their leading space so that concatenating step texts
 * reconstructs the generated string, which is what the trace consumers do.
 */

const WORDS = [
  "the", "a", "an", "of", "to", "and", "in", "is", "was", "it",
  "for", "on", "with", "as", "at", "by", "from", "that", "this", "be",
  "are", "or", "not", "but", "they", "we", "you", "he", "she", "one",
  "all", "there", "when", "up", "out", "if", "about", "who", "get", "which",
  "go", "me", "sky", "sun", "blue", "light", "time", "day", "night", "world",
  "upon", "once", "numbers", "code", "words", "story", "answer", "question",
  "true", "false", "yes", "no",
] as const;

export class Tokenizer {
  readonly unkId = 0;
  readonly eosId = 1;
  private readonly idToText: string[];
  private readonly wordToId: Map<string, number>;

  constructor() {
    this.idToText = ["<unk>", "<eos>", ...WORDS];
    this.wordToId = new Map();
    for (const [id, text] of this.idToText.entries()) {
      this.wordToId.set(text, id);
    }
  }

  get vocabSize(): number {
    return this.idToText.length;
  }

  encode(text: string): number[] {
    const words = text.toLowerCase().split(/[^a-z0-9<>]+/).filter(Boolean);
    return words.map((w) => this.wordToId.get(w) ?? this.unkId);
  }

  /** Text of one token as it appears inside a generation (leading space). */
  decodeToken(id: number): string {
    if (id < 0 || id >= this.idToText.length) {
      throw new Error(`token id ${id} outside vocabulary of ${this.idToText.length}`);
    }
    return ` ${this.idToText[id]}`;
  }
}
