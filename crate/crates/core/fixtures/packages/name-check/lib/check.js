const MAX_LENGTH = 214

function isValidName(name) {
  const trimmed = name.trim()
  if (trimmed.length > MAX_LENGTH) {
    return false
  }
  return /^([a-z0-9]+-?)*[a-z0-9]$/.test(trimmed)
}

function normalize(name) {
  return name.toLowerCase().split(' ').join('-')
}

module.exports = { isValidName, normalize }
